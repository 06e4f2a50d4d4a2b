use std::fmt::Write;

use indexmap::IndexMap;

use super::NeighborMse;

/// Evaluation of one model on one dataset split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// √PEHE, only when ground-truth uplift is known.
    pub pehe: Option<f64>,
    pub ate_error: Option<f64>,
    /// `(k, Y_k)` ordered by `k`.
    pub curve: Vec<(f64, f64)>,
    pub qini: f64,
    /// `(x, g(x))` points of the Qini curve.
    pub qini_gain: Vec<(f64, f64)>,
    pub neighbor: Option<NeighborMse>,
    /// Model id, dataset id, seed and similar provenance.
    pub metadata: IndexMap<String, String>,
}

fn num(x: f64) -> String {
    format!("{x:.10e}")
}

impl EvalReport {
    /// One `key value` record per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "meta.{k} {v}");
        }
        if let Some(p) = self.pehe {
            let _ = writeln!(s, "sqrt_pehe {}", num(p));
        }
        if let Some(a) = self.ate_error {
            let _ = writeln!(s, "ate_error {}", num(a));
        }
        let _ = writeln!(s, "qini {}", num(self.qini));
        for (k, y) in &self.curve {
            let _ = writeln!(s, "uplift_at_{:.0} {}", k * 100.0, num(*y));
        }
        if let Some(m) = self.neighbor {
            let _ = writeln!(s, "neighbor_mse {}", num(m.neighbor_mse));
            let _ = writeln!(s, "random_mse {}", num(m.random_mse));
        }
        s
    }

    /// `k,Y_k` table.
    pub fn curve_csv(&self) -> String {
        table("k,Y_k", &self.curve)
    }

    /// `k,qini_gain` table, one row per retained bin edge including `k = 0`.
    pub fn qini_csv(&self) -> String {
        table("k,qini_gain", &self.qini_gain)
    }

    pub fn is_finite(&self) -> bool {
        let opt = |o: Option<f64>| o.is_none_or(f64::is_finite);
        opt(self.pehe)
            && opt(self.ate_error)
            && self.qini.is_finite()
            && self.curve.iter().chain(&self.qini_gain).all(|(a, b)| a.is_finite() && b.is_finite())
            && self.neighbor.is_none_or(|m| m.neighbor_mse.is_finite() && m.random_mse.is_finite())
    }
}

fn table(header: &str, rows: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in rows {
        let _ = writeln!(s, "{},{}", num(*a), num(*b));
    }
    s
}
