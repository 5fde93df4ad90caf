use thiserror::Error;

use super::propensity;
use crate::model::{InflowDistribution, ReactionNetwork};
use crate::state::StateVec;

/// Largest number of states a CME box may hold.
pub const MAX_BOX_STATES: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmeError {
    #[error("box too small: leaked mass {leaked:.3e} exceeds tolerance {tol:.3e} at t = {time}")]
    BoxTooSmall { time: f64, leaked: f64, tol: f64 },
    #[error("time grid must be non-empty, increasing and start at 0")]
    BadGrid,
    #[error("box dimension {got} does not match {expected} species")]
    BoxDimension { expected: usize, got: usize },
    #[error("box has {0} states, above the supported maximum")]
    BoxTooLarge(usize),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Largest leaked mass tolerated at any output time.
    pub leak_tol: f64,
}

impl Default for CmeOptions {
    fn default() -> Self {
        CmeOptions { atol: 1e-10, rtol: 1e-9, leak_tol: 1e-9 }
    }
}

/// Distribution of one compartment's content on the box `0 <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDistribution {
    pub time: f64,
    pub upper: Vec<u32>,
    /// Dense probabilities in mixed-radix order, last species fastest.
    pub probs: Vec<f64>,
    pub leaked_mass: f64,
}

impl TruncatedDistribution {
    pub fn index_of(&self, x: &StateVec) -> Option<usize> {
        box_index(&self.upper, x)
    }

    /// Probability of `x`, zero outside the box.
    pub fn prob(&self, x: &StateVec) -> f64 {
        self.index_of(x).map_or(0.0, |i| self.probs[i])
    }

    pub fn state_at(&self, i: usize) -> StateVec {
        box_state(&self.upper, i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateVec, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (self.state_at(i), p))
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

pub(crate) fn box_size(upper: &[u32]) -> Option<usize> {
    upper.iter().try_fold(1usize, |acc, &u| acc.checked_mul(u as usize + 1))
}

pub(crate) fn box_index(upper: &[u32], x: &StateVec) -> Option<usize> {
    if x.dim() != upper.len() {
        return None;
    }
    let mut idx = 0usize;
    for (&c, &u) in x.counts().iter().zip(upper) {
        if c > u {
            return None;
        }
        idx = idx * (u as usize + 1) + c as usize;
    }
    Some(idx)
}

pub(crate) fn box_state(upper: &[u32], mut i: usize) -> StateVec {
    let mut counts = vec![0u32; upper.len()];
    for (slot, &u) in counts.iter_mut().zip(upper).rev() {
        let radix = u as usize + 1;
        *slot = (i % radix) as u32;
        i /= radix;
    }
    StateVec::from(counts)
}

/// Sparse generator restricted to the box; transitions leaving the box feed
/// the extra component at index `n`.
struct BoxGenerator {
    n: usize,
    outflow: Vec<f64>,
    edges: Vec<(u32, u32, f64)>,
}

impl BoxGenerator {
    fn new(chem: &ReactionNetwork, upper: &[u32], n: usize) -> Self {
        let mut outflow = vec![0.0; n];
        let mut edges = Vec::new();
        let deltas: Vec<Vec<i64>> = chem.reactions.iter().map(|r| r.net_change()).collect();
        for (i, out) in outflow.iter_mut().enumerate() {
            let x = box_state(upper, i);
            for (r, delta) in chem.reactions.iter().zip(&deltas) {
                let a = propensity(r, &x);
                if a <= 0.0 {
                    continue;
                }
                *out += a;
                let dst = x.offset(delta).and_then(|y| box_index(upper, &y)).unwrap_or(n);
                edges.push((i as u32, dst as u32, a));
            }
        }
        BoxGenerator { n, outflow, edges }
    }

    fn apply(&self, p: &[f64], dp: &mut [f64]) {
        for i in 0..self.n {
            dp[i] = -self.outflow[i] * p[i];
        }
        dp[self.n] = 0.0;
        for &(src, dst, a) in &self.edges {
            dp[dst as usize] += a * p[src as usize];
        }
    }
}

// Dormand-Prince 5(4) tableau. The generator is time independent, so the
// node offsets are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

struct Integrator<'a> {
    gen: &'a BoxGenerator,
    opts: CmeOptions,
    k: Vec<Vec<f64>>,
    stage: Vec<f64>,
    y5: Vec<f64>,
    h: f64,
    /// First-same-as-last: `k[0]` holds the derivative at the current state.
    k0_valid: bool,
}

impl<'a> Integrator<'a> {
    fn new(gen: &'a BoxGenerator, opts: CmeOptions) -> Self {
        let m = gen.n + 1;
        Integrator { gen, opts, k: vec![vec![0.0; m]; 7], stage: vec![0.0; m], y5: vec![0.0; m], h: 0.0, k0_valid: false }
    }

    /// Advances `y` from `t` to exactly `t_end`.
    #[allow(clippy::needless_range_loop)]
    fn advance(&mut self, y: &mut Vec<f64>, mut t: f64, t_end: f64) -> Result<(), CmeError> {
        let m = y.len();
        if !self.k0_valid {
            self.gen.apply(y, &mut self.k[0]);
            self.k0_valid = true;
        }
        if self.h == 0.0 {
            let rate = self.gen.outflow.iter().fold(0.0f64, |a, &b| a.max(b));
            self.h = if rate > 0.0 { 0.1 / rate } else { t_end - t };
        }
        while t < t_end {
            let remaining = t_end - t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h <= 1e-14 * t_end.max(1.0) && !last {
                return Err(CmeError::StepUnderflow(t));
            }
            for s in 1..7 {
                for i in 0..m {
                    let mut acc = 0.0;
                    for (j, a) in A[s][..s].iter().enumerate() {
                        if *a != 0.0 {
                            acc += a * self.k[j][i];
                        }
                    }
                    self.stage[i] = y[i] + h * acc;
                }
                self.gen.apply(&self.stage, &mut self.k[s]);
            }
            // stage 6 is the 5th-order solution itself (FSAL)
            let mut err: f64 = 0.0;
            for i in 0..m {
                let mut e = 0.0;
                for s in 0..7 {
                    e += (B5[s] - B4[s]) * self.k[s][i];
                }
                let y5 = self.stage[i];
                self.y5[i] = y5;
                let scale = self.opts.atol + self.opts.rtol * y[i].abs().max(y5.abs());
                err = err.max((h * e).abs() / scale);
            }
            if err <= 1.0 {
                t = if last { t_end } else { t + h };
                std::mem::swap(y, &mut self.y5);
                self.k.swap(0, 6);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        Ok(())
    }
}

fn initial_probs(init: &InflowDistribution, upper: &[u32], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    match init {
        InflowDistribution::PointMass(x) => {
            if let Some(i) = box_index(upper, x) {
                p[i] = 1.0;
            }
        }
        InflowDistribution::Categorical(items) => {
            for (x, q) in items {
                if let Some(i) = box_index(upper, x) {
                    p[i] += q;
                }
            }
        }
        InflowDistribution::ProductPoisson(_) => {
            for (i, slot) in p[..n].iter_mut().enumerate() {
                *slot = init.pmf(&box_state(upper, i));
            }
        }
    }
    let inside: f64 = p[..n].iter().sum();
    p[n] = (1.0 - inside).max(0.0);
    p
}

/// Integrates the master equation of `chem` on the box `0 <= x <= upper`,
/// starting from `init` restricted to the box, and returns the distribution
/// at each time of `t_grid`. Mass that leaves the box (or starts outside it)
/// is tracked in `leaked_mass`.
pub fn solve_cme(
    chem: &ReactionNetwork,
    init: &InflowDistribution,
    t_grid: &[f64],
    upper: &[u32],
    opts: CmeOptions,
) -> Result<Vec<TruncatedDistribution>, CmeError> {
    let mut out = Vec::with_capacity(t_grid.len());
    solve_cme_visit(chem, init, t_grid, upper, opts, |time, probs, leaked| {
        out.push(TruncatedDistribution {
            time,
            upper: upper.to_vec(),
            probs: probs.iter().map(|&p| p.max(0.0)).collect(),
            leaked_mass: leaked,
        });
    })?;
    Ok(out)
}

/// Streaming form of [`solve_cme`]: calls `visit(t, probs, leaked)` at each
/// grid time instead of storing the distributions. `probs` is in box order
/// and may hold tiny negative round-off values.
pub fn solve_cme_visit(
    chem: &ReactionNetwork,
    init: &InflowDistribution,
    t_grid: &[f64],
    upper: &[u32],
    opts: CmeOptions,
    mut visit: impl FnMut(f64, &[f64], f64),
) -> Result<(), CmeError> {
    if upper.len() != chem.dim() {
        return Err(CmeError::BoxDimension { expected: chem.dim(), got: upper.len() });
    }
    if t_grid.first() != Some(&0.0) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CmeError::BadGrid);
    }
    let n = box_size(upper).filter(|&s| s <= MAX_BOX_STATES).ok_or(CmeError::BoxTooLarge(usize::MAX))?;
    let gen = BoxGenerator::new(chem, upper, n);
    let mut y = initial_probs(init, upper, n);
    let mut integ = Integrator::new(&gen, opts);
    let mut t = 0.0;
    for &tg in t_grid {
        if tg > t {
            integ.advance(&mut y, t, tg)?;
            t = tg;
        }
        let leaked = y[n].max(0.0);
        if leaked > opts.leak_tol {
            return Err(CmeError::BoxTooSmall { time: tg, leaked, tol: opts.leak_tol });
        }
        visit(tg, &y[..n], leaked);
    }
    Ok(())
}

/// [`solve_cme`] that doubles every box bound on `BoxTooSmall`, at most
/// `max_doublings` times.
pub fn solve_cme_with_retry(
    chem: &ReactionNetwork,
    init: &InflowDistribution,
    t_grid: &[f64],
    upper: &[u32],
    opts: CmeOptions,
    max_doublings: u32,
) -> Result<Vec<TruncatedDistribution>, CmeError> {
    let mut bounds = upper.to_vec();
    let mut attempt = 0;
    loop {
        match solve_cme(chem, init, t_grid, &bounds, opts) {
            Err(CmeError::BoxTooSmall { .. }) if attempt < max_doublings => {
                attempt += 1;
                bounds = bounds.iter().map(|&u| u.saturating_mul(2).max(1)).collect();
            }
            other => return other,
        }
    }
}
