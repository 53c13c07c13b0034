//! Versioned summary documents and plot-ready CSV exports.

use serde::Serialize;

use crate::coincidence::VisibilityFit;
use crate::experiments::{BellTestResult, Calibration, FringeScanResult, G2Row};

pub const SUMMARY_SCHEMA: &str = "afcsim-summary/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema: String,
    pub name: String,
    pub seed: u64,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2_rows: Option<Vec<G2Row>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fringes: Option<FringeScanResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bell: Option<BellTestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl Summary {
    pub fn new(name: &str, seed: u64, kind: &str) -> Self {
        Summary {
            schema: SUMMARY_SCHEMA.to_string(),
            name: name.to_string(),
            seed,
            kind: kind.to_string(),
            g2_rows: None,
            fringes: None,
            bell: None,
            calibration: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// True when any numeric field is NaN or infinite; runners treat that as
    /// a hard error.
    pub fn has_non_finite(&self) -> bool {
        fn bad(x: f64) -> bool {
            !x.is_finite()
        }
        fn fit_bad(f: &VisibilityFit) -> bool {
            bad(f.visibility)
                || bad(f.visibility_sigma)
                || bad(f.phase_offset)
                || bad(f.phase_sigma)
                || bad(f.baseline)
        }
        if let Some(rows) = &self.g2_rows {
            if rows.iter().any(|r| {
                bad(r.g2) || bad(r.g2_sigma) || bad(r.g2_predicted) || bad(r.peak_delay)
            }) {
                return true;
            }
        }
        if let Some(fr) = &self.fringes {
            if fr.fits.iter().any(fit_bad)
                || bad(fr.pair_rate)
                || bad(fr.fitted_idler_phase_difference)
            {
                return true;
            }
        }
        if let Some(bell) = &self.bell {
            if bad(bell.s)
                || bad(bell.s_sigma)
                || bad(bell.s_predicted_ideal)
                || bad(bell.s_predicted_noisy)
                || bell.correlators.iter().any(|c| bad(c.e) || bad(c.sigma))
            {
                return true;
            }
        }
        if let Some(cal) = &self.calibration {
            if bad(cal.rate_per_mw)
                || bad(cal.predicted_g2_no_memory)
                || bad(cal.predicted_g2_stored)
            {
                return true;
            }
        }
        false
    }
}

/// CSV of g² rows.
pub fn g2_rows_csv(rows: &[G2Row]) -> String {
    let mut out = String::from(
        "power_mW,storage_time_s,memory_efficiency,g2,g2_sigma,g2_predicted,n_peak,n_accidental,peak_delay_s,duration_s\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:.6},{},{},{:.6},{:.6},{:.6},{},{},{:.6e},{:.3}\n",
            r.power_mw,
            r.storage_time.map_or(String::new(), |t| format!("{t:.3e}")),
            r.memory_efficiency
                .map_or(String::new(), |e| format!("{e:.4}")),
            r.g2,
            r.g2_sigma,
            r.g2_predicted,
            r.n_peak,
            r.n_accidental,
            r.peak_delay,
            r.duration,
        ));
    }
    out
}

/// CSV of fringe points.
pub fn fringe_csv(result: &FringeScanResult) -> String {
    let mut out = String::from("phase_s_rad,phase_i_rad,counts,accidental_estimate\n");
    for p in &result.points {
        out.push_str(&format!(
            "{:.6},{:.6},{},{:.3}\n",
            p.phase_s, p.phase_i, p.counts, p.accidental_estimate
        ));
    }
    out
}

/// CSV of Bell correlators.
pub fn bell_csv(result: &BellTestResult) -> String {
    let mut out =
        String::from("correlator,e,sigma,n_pp,n_pm,n_mp,n_mm,marginal_x,marginal_y\n");
    for (k, c) in result.correlators.iter().enumerate() {
        let m = result.marginals.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
        out.push_str(&format!(
            "E{},{:.6},{:.6},{},{},{},{},{:.4},{:.4}\n",
            k + 1,
            c.e,
            c.sigma,
            c.counts[0],
            c.counts[1],
            c.counts[2],
            c.counts[3],
            m.0,
            m.1
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_serializes_with_schema() {
        let s = Summary::new("demo", 5, "pump-scan");
        let json = s.to_json();
        assert!(json.contains("afcsim-summary/1"));
        assert!(!s.has_non_finite());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["seed"], 5);
    }

    #[test]
    fn non_finite_detection() {
        let mut s = Summary::new("demo", 5, "pump-scan");
        s.g2_rows = Some(vec![G2Row {
            power_mw: 3.0,
            storage_time: None,
            memory_efficiency: None,
            g2: f64::NAN,
            g2_sigma: 0.0,
            g2_predicted: 1.0,
            n_peak: 1,
            n_accidental: 1,
            peak_delay: 0.0,
            duration: 1.0,
        }]);
        assert!(s.has_non_finite());
    }
}
