use gauss_quad::GaussLegendre;

/// Settings of the panelled Gauss–Legendre rule for integrals against the
/// exponential density `k e^{-k t}` on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub nodes_per_panel: usize,
    pub panel_width: f64,
    /// The rule stops at the horizon `T` with `e^{-k T} = tail_eps`.
    pub tail_eps: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { nodes_per_panel: 64, panel_width: 1.0, tail_eps: 1e-12 }
    }
}

/// Nodes in increasing order with weights that already include the density.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub horizon: f64,
    /// Exact density mass beyond the horizon, `e^{-k T}`.
    pub tail: f64,
}

impl ExpQuadrature {
    pub fn new(rate: f64, opts: &QuadOptions) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "exponential rate must be positive");
        assert!(opts.nodes_per_panel >= 2 && opts.panel_width > 0.0);
        assert!(opts.tail_eps > 0.0 && opts.tail_eps < 1.0);
        let horizon = -opts.tail_eps.ln() / rate;
        let panels = (horizon / opts.panel_width).ceil().max(1.0) as usize;
        let width = horizon / panels as f64;
        let rule = GaussLegendre::new(opts.nodes_per_panel).expect("degree is at least 2");
        let mut ref_pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        ref_pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut nodes = Vec::with_capacity(panels * ref_pairs.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for p in 0..panels {
            let a = p as f64 * width;
            for &(x, w) in &ref_pairs {
                let t = a + 0.5 * width * (x + 1.0);
                nodes.push(t);
                weights.push(0.5 * width * w * rate * (-rate * t).exp());
            }
        }
        ExpQuadrature { nodes, weights, horizon, tail: (-rate * horizon).exp() }
    }

    /// `int_0^T f(t) k e^{-k t} dt`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}
