/// One row per iteration `t = 0..=T`. Unavailable quantities are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub dual_value: f64,
    pub primal_gap: f64,
    /// `‖Ax_t − b‖` for affine problems, the consensus gap for networks.
    pub gap: f64,
    pub calls: u64,
    pub bits: u64,
    pub r: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Diagnostics raised during the run (bound violations and the like).
    pub notes: Vec<String>,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Smallest dual value seen up to each row.
    pub fn best_dual(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.rows
            .iter()
            .map(|r| {
                if r.dual_value < best {
                    best = r.dual_value;
                }
                best
            })
            .collect()
    }

    /// Cumulative columns never decrease and `t` counts up from zero.
    pub fn is_consistent(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, r)| r.t == i)
            && self.rows.windows(2).all(|w| w[1].calls >= w[0].calls && w[1].bits >= w[0].bits)
    }
}
