pub mod analysis;
pub mod coarse;
pub mod crn;
pub mod model;
pub mod sim;
pub mod state;
pub mod stationary;

pub use coarse::CoarseState;
pub use sim::SimState;
pub use state::StateVec;
