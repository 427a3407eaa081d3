//! Side-by-side comparison of two traces on a common bit axis.

use serde::Serialize;

use pps_core::solvers::TraceRow;

/// One row of `a` with the value `b` had reached using no more bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aligned {
    pub bits: u64,
    pub value_a: f64,
    pub value_b: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<Aligned>,
    pub final_a: f64,
    pub final_b: f64,
    pub bits_a: u64,
    pub bits_b: u64,
    /// Bits `a` spent before first getting within `tolerance` (relative) of
    /// `b`'s final value.
    pub bits_to_match: Option<u64>,
    pub tolerance: f64,
}

impl CompareReport {
    /// `bits_to_match / bits_b`.
    pub fn bits_fraction(&self) -> Option<f64> {
        self.bits_to_match.map(|x| x as f64 / self.bits_b as f64)
    }
}

/// Which trace column to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Column {
    #[default]
    DualValue,
    PrimalGap,
    Gap,
}

impl Column {
    fn get(self, r: &TraceRow) -> f64 {
        match self {
            Column::DualValue => r.dual_value,
            Column::PrimalGap => r.primal_gap,
            Column::Gap => r.gap,
        }
    }
}

/// For every row of `a`, pairs it with the last row of `b` whose cumulative
/// bits do not exceed it; rows of `a` below `b`'s first bit count are skipped.
pub fn compare(a: &[TraceRow], b: &[TraceRow], column: Column, tolerance: f64) -> Result<CompareReport, String> {
    let (Some(la), Some(lb)) = (a.last(), b.last()) else {
        return Err("empty trace".into());
    };
    let mut rows = Vec::with_capacity(a.len());
    let mut j = 0usize;
    for ra in a {
        while j + 1 < b.len() && b[j + 1].bits <= ra.bits {
            j += 1;
        }
        if b[j].bits > ra.bits {
            continue;
        }
        let (va, vb) = (column.get(ra), column.get(&b[j]));
        rows.push(Aligned { bits: ra.bits, value_a: va, value_b: vb, ratio: va / vb });
    }
    let final_b = column.get(lb);
    let bits_to_match = a.iter().find(|r| (column.get(r) - final_b).abs() <= tolerance * final_b.abs()).map(|r| r.bits);
    Ok(CompareReport {
        rows,
        final_a: column.get(la),
        final_b,
        bits_a: la.bits,
        bits_b: lb.bits,
        bits_to_match,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(points: &[(u64, f64)]) -> Vec<TraceRow> {
        points
            .iter()
            .enumerate()
            .map(|(t, &(bits, v))| TraceRow {
                t,
                dual_value: v,
                primal_gap: f64::NAN,
                gap: 0.0,
                calls: t as u64,
                bits,
                r: 1,
                m: 1,
                alpha: 1.0,
                beta: 1.0,
            })
            .collect()
    }

    #[test]
    fn self_comparison_is_one() {
        let a = trace(&[(10, 3.0), (20, 2.0), (30, 1.5), (40, 1.25)]);
        let rep = compare(&a, &a, Column::DualValue, 0.05).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert!(rep.rows.iter().all(|r| r.ratio == 1.0));
        assert_eq!(rep.bits_to_match, Some(40));
        assert_eq!(rep.bits_fraction(), Some(1.0));
    }

    #[test]
    fn aligns_on_bits() {
        let a = trace(&[(1, 4.0), (5, 2.0), (9, 1.0)]);
        let b = trace(&[(4, 8.0), (8, 4.0), (100, 1.02)]);
        let rep = compare(&a, &b, Column::DualValue, 0.05).unwrap();
        // a's first row precedes b's first message
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.rows[0], Aligned { bits: 5, value_a: 2.0, value_b: 8.0, ratio: 0.25 });
        assert_eq!(rep.rows[1].value_b, 4.0);
        assert_eq!(rep.bits_to_match, Some(9));
        assert!((rep.bits_fraction().unwrap() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn no_match_is_reported() {
        let a = trace(&[(1, 4.0)]);
        let b = trace(&[(1, 1.0)]);
        assert_eq!(compare(&a, &b, Column::DualValue, 0.05).unwrap().bits_to_match, None);
        assert!(compare(&[], &b, Column::DualValue, 0.05).is_err());
    }
}
