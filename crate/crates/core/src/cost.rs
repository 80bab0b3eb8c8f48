//! Postings-count cost accounting for expansion, selection and latency.
//!
//! All quantities are integer postings counts. For vertical feedback
//! C_VF = C_SEL + C_VR and C_Lat = C_SEL + max over the selected verticals;
//! for feedback on a single index the whole index acts as one vertical with
//! no selection cost, so C_QE = C_VF = C_Lat.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-vertical key used when feedback comes from one unpartitioned index.
pub const MONOLITHIC: &str = "monolithic";

/// Raw counters emitted by a feedback step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpansionCost {
    None,
    Monolithic(u64),
    Vertical {
        c_sel: u64,
        per_vertical: BTreeMap<String, u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub method: String,
    pub topic: String,
    pub c_sel: u64,
    pub per_vertical: BTreeMap<String, u64>,
    pub c_vr: u64,
    pub c_vf: u64,
    pub c_qe: u64,
    pub c_r_final: u64,
    pub c_prf_total: u64,
    pub c_lat: u64,
}

impl CostReport {
    pub fn no_prf(final_count: u64) -> Self {
        CostReport {
            method: String::new(),
            topic: String::new(),
            c_sel: 0,
            per_vertical: BTreeMap::new(),
            c_vr: 0,
            c_vf: 0,
            c_qe: 0,
            c_r_final: final_count,
            c_prf_total: final_count,
            c_lat: 0,
        }
    }

    pub fn from_expansion(cost: &ExpansionCost, final_count: u64) -> Self {
        match cost {
            ExpansionCost::None => Self::no_prf(final_count),
            ExpansionCost::Monolithic(n) => assemble_prf_cost(*n, final_count),
            ExpansionCost::Vertical { c_sel, per_vertical } => assemble_prvf_cost(*c_sel, per_vertical.clone(), final_count),
        }
    }

    pub fn labeled(mut self, method: &str, topic: &str) -> Self {
        self.method = method.to_string();
        self.topic = topic.to_string();
        self
    }

    /// Checks the integer identities that tie the fields together.
    pub fn check(&self) -> Result<()> {
        let sum: u64 = self.per_vertical.values().sum();
        let max = self.per_vertical.values().copied().max().unwrap_or(0);
        let ok = self.c_vr == sum
            && self.c_vf == self.c_sel + self.c_vr
            && self.c_prf_total == self.c_qe + self.c_r_final
            && (self.c_qe == 0 || self.c_lat == self.c_sel + max)
            && self.c_lat <= self.c_vf;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("inconsistent cost report {self:?}")))
        }
    }
}

/// Standard PRF: the initial retrieval is the whole expansion cost.
pub fn assemble_prf_cost(initial_count: u64, final_count: u64) -> CostReport {
    let mut per_vertical = BTreeMap::new();
    if initial_count > 0 {
        per_vertical.insert(MONOLITHIC.to_string(), initial_count);
    }
    CostReport {
        method: String::new(),
        topic: String::new(),
        c_sel: 0,
        per_vertical,
        c_vr: initial_count,
        c_vf: initial_count,
        c_qe: initial_count,
        c_r_final: final_count,
        c_prf_total: initial_count + final_count,
        c_lat: initial_count,
    }
}

/// Vertical feedback: selection plus parallel retrieval on the selected verticals.
pub fn assemble_prvf_cost(c_sel: u64, per_vertical: BTreeMap<String, u64>, final_count: u64) -> CostReport {
    let c_vr: u64 = per_vertical.values().sum();
    let longest = per_vertical.values().copied().max().unwrap_or(0);
    let c_vf = c_sel + c_vr;
    CostReport {
        method: String::new(),
        topic: String::new(),
        c_sel,
        per_vertical,
        c_vr,
        c_vf,
        c_qe: c_vf,
        c_r_final: final_count,
        c_prf_total: c_vf + final_count,
        c_lat: c_sel + longest,
    }
}

/// Per-method means of every cost field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSummary {
    pub method: String,
    pub queries: usize,
    pub c_sel: f64,
    pub c_vr: f64,
    pub c_vf: f64,
    pub c_qe: f64,
    pub c_r_final: f64,
    pub c_lat: f64,
}

impl CostSummary {
    /// Relative change of mean C_QE and C_Lat against `baseline`, in percent.
    pub fn reduction_vs(&self, baseline: &CostSummary) -> (Option<f64>, Option<f64>) {
        (percent_change(self.c_qe, baseline.c_qe), percent_change(self.c_lat, baseline.c_lat))
    }
}

/// (value − baseline) / baseline · 100; `None` for a zero baseline.
pub fn percent_change(value: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (value - baseline) / baseline * 100.0)
}

/// Average reports of a single method.
pub fn aggregate(reports: &[CostReport]) -> Result<CostSummary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParam("no cost reports to aggregate".into()))?;
    if let Some(other) = reports.iter().find(|r| r.method != first.method) {
        return Err(Error::MixedMethods(first.method.clone(), other.method.clone()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&CostReport) -> u64| reports.iter().map(|r| f(r) as f64).sum::<f64>() / n;
    Ok(CostSummary {
        method: first.method.clone(),
        queries: reports.len(),
        c_sel: mean(|r| r.c_sel),
        c_vr: mean(|r| r.c_vr),
        c_vf: mean(|r| r.c_vf),
        c_qe: mean(|r| r.c_qe),
        c_r_final: mean(|r| r.c_r_final),
        c_lat: mean(|r| r.c_lat),
    })
}

/// Group reports by method (first-seen order) and average each group.
pub fn aggregate_by_method(reports: &[CostReport]) -> Result<Vec<CostSummary>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<CostReport>> = BTreeMap::new();
    for r in reports {
        if !groups.contains_key(r.method.as_str()) {
            order.push(&r.method);
        }
        groups.entry(&r.method).or_default().push(r.clone());
    }
    order.into_iter().map(|m| aggregate(&groups[m])).collect()
}

pub const COST_CSV_HEADER: [&str; 8] = ["method", "topic", "C_SEL", "C_VR", "C_VF", "C_QE", "C_R_final", "C_Lat"];

pub fn write_costs_csv<W: Write>(out: W, reports: &[CostReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COST_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.method.clone(),
            r.topic.clone(),
            r.c_sel.to_string(),
            r.c_vr.to_string(),
            r.c_vf.to_string(),
            r.c_qe.to_string(),
            r.c_r_final.to_string(),
            r.c_lat.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verticals(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn prf_zero() {
        let r = assemble_prf_cost(0, 0);
        assert_eq!((r.c_qe, r.c_lat, r.c_prf_total, r.c_vf), (0, 0, 0, 0));
        r.check().unwrap();
    }

    #[test]
    fn prf_counts() {
        let r = assemble_prf_cost(269175, 12);
        assert_eq!(r.c_qe, 269175);
        assert_eq!(r.c_lat, 269175);
        let r = assemble_prf_cost(8, 13);
        assert_eq!(r.c_prf_total, 21);
        r.check().unwrap();
    }

    #[test]
    fn prvf_single_vertical() {
        let r = assemble_prvf_cost(9, verticals(&[("x", 100)]), 0);
        assert_eq!((r.c_vf, r.c_lat, r.c_qe), (109, 109, 109));
        r.check().unwrap();
    }

    #[test]
    fn prvf_two_verticals() {
        let r = assemble_prvf_cost(10, verticals(&[("a", 30), ("b", 50)]), 7);
        assert_eq!((r.c_vr, r.c_vf, r.c_lat), (80, 90, 60));
        assert_eq!(r.c_prf_total, 97);
        r.check().unwrap();
    }

    #[test]
    fn aggregate_means_and_reduction() {
        let a = assemble_prf_cost(100, 0).labeled("m", "1");
        let b = assemble_prf_cost(300, 0).labeled("m", "2");
        let s = aggregate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(s.c_qe, 100.0);
        let s = aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(s.c_qe, 200.0);
        let other = assemble_prf_cost(1, 0).labeled("n", "1");
        assert!(matches!(aggregate(&[a, other]), Err(Error::MixedMethods(..))));
        let pct = percent_change(703.0, 1110.0).unwrap();
        assert!((pct - (-36.7)).abs() < 0.05, "{pct}");
        assert_eq!(percent_change(1.0, 0.0), None);
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        let r = assemble_prvf_cost(1, verticals(&[("a", 2)]), 3).labeled("prvf(taily)", "MB01");
        write_costs_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "method,topic,C_SEL,C_VR,C_VF,C_QE,C_R_final,C_Lat\nprvf(taily),MB01,1,2,3,3,3,3\n");
    }
}
