//! Per-agent reports in CSV and plain-text form.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::market::AuctionOutcome;
use crate::planner::Allocation;
use crate::scenario::Scenario;

pub const CSV_HEADER: &str = "agent_id,bus,mu,cost,payment,per_unit_payment,utility";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub agent_id: String,
    pub bus: u32,
    pub mu: f64,
    /// Bid value of the procured quantity.
    pub cost: f64,
    pub payment: Option<f64>,
    pub utility: Option<f64>,
}

impl ReportRow {
    /// Payment per unit of inertia; undefined for unallocated agents.
    pub fn per_unit_payment(&self) -> Option<f64> {
        match self.payment {
            Some(p) if self.mu > 0.0 => Some(p / self.mu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub level: f64,
    pub worst_case: f64,
    pub gamma_term: Option<f64>,
    pub cost_term: f64,
    pub total_cost: f64,
    pub total_payment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub title: String,
    pub rows: Vec<ReportRow>,
    pub summary: ReportSummary,
}

fn rows_for(scenario: &Scenario, mu: &[f64]) -> Result<Vec<ReportRow>> {
    if mu.len() != scenario.agents.len() {
        return Err(Error::InvalidInput(format!(
            "allocation has {} entries for {} agents",
            mu.len(),
            scenario.agents.len()
        )));
    }
    Ok(scenario
        .agents
        .iter()
        .zip(mu)
        .map(|(a, &q)| ReportRow {
            agent_id: a.id.clone(),
            bus: a.bus,
            mu: q,
            cost: a.bid.eval(q),
            payment: None,
            utility: None,
        })
        .collect())
}

fn summarize(rows: &[ReportRow], alloc: &Allocation) -> ReportSummary {
    let total_cost = rows.iter().map(|r| r.cost).sum();
    let total_payment = rows
        .iter()
        .map(|r| r.payment)
        .collect::<Option<Vec<f64>>>()
        .map(|p| p.iter().sum());
    ReportSummary {
        level: alloc.level,
        worst_case: alloc.worst_case,
        gamma_term: alloc.objective_parts.gamma_term,
        cost_term: alloc.objective_parts.cost_term,
        total_cost,
        total_payment,
    }
}

impl Report {
    pub fn from_allocation(
        title: impl Into<String>,
        scenario: &Scenario,
        alloc: &Allocation,
    ) -> Result<Self> {
        let rows = rows_for(scenario, &alloc.mu)?;
        let summary = summarize(&rows, alloc);
        Ok(Report {
            title: title.into(),
            rows,
            summary,
        })
    }

    pub fn from_auction(
        title: impl Into<String>,
        scenario: &Scenario,
        outcome: &AuctionOutcome,
    ) -> Result<Self> {
        let mut rows = rows_for(scenario, outcome.mu())?;
        for (k, row) in rows.iter_mut().enumerate() {
            row.payment = outcome.payments.get(k).copied();
            row.utility = outcome.utilities.as_ref().map(|u| u[k]);
        }
        let summary = summarize(&rows, &outcome.allocation);
        Ok(Report {
            title: title.into(),
            rows,
            summary,
        })
    }

    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.agent_id,
                r.bus,
                sig6(r.mu),
                sig6(r.cost),
                opt(r.payment),
                opt(r.per_unit_payment()),
                opt(r.utility)
            )?;
        }
        let s = &self.summary;
        writeln!(
            w,
            "# level={},worst_case={},gamma_term={},cost_term={},total_cost={},total_payment={}",
            sig6(s.level),
            sig6(s.worst_case),
            opt(s.gamma_term),
            sig6(s.cost_term),
            sig6(s.total_cost),
            opt(s.total_payment)
        )
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("report is UTF-8")
    }

    pub fn write_text<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", self.title)?;
        writeln!(
            w,
            "{:<10} {:>4} {:>12} {:>12} {:>12} {:>10} {:>12}",
            "agent", "bus", "mu", "cost", "payment", "per unit", "utility"
        )?;
        let cell = |x: Option<f64>, width: usize| match x {
            Some(v) => format!("{v:>width$.4}"),
            None => format!("{:>width$}", "-"),
        };
        for r in &self.rows {
            writeln!(
                w,
                "{:<10} {:>4} {:>12.4} {:>12.4} {} {} {}",
                r.agent_id,
                r.bus,
                r.mu,
                r.cost,
                cell(r.payment, 12),
                cell(r.per_unit_payment(), 10),
                cell(r.utility, 12)
            )?;
        }
        let s = &self.summary;
        writeln!(w, "level {:.4}  worst case {:.6}", s.level, s.worst_case)?;
        if let Some(g) = s.gamma_term {
            writeln!(w, "gamma term {g:.4}  cost term {:.4}", s.cost_term)?;
        }
        write!(w, "total cost {:.4}", s.total_cost)?;
        if let Some(p) = s.total_payment {
            write!(w, "  total payment {p:.4}")?;
        }
        writeln!(w)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("report is UTF-8")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

/// Six significant digits, trailing zeros dropped.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x == 0.0 {
            "0".into()
        } else {
            x.to_string()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{allocation_from, Agent};
    use crate::scenario::case_study;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(201.63084), "201.631");
        assert_eq!(sig6(11.034318), "11.0343");
        assert_eq!(sig6(5.0), "5");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-0.000012345678), "-1.23457e-5");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(-1e-20), "-1e-20");
        assert_eq!(sig6(0.1), "0.1");
        for x in [7.654321, 1e-7, 987654.321, 42.0] {
            let back: f64 = sig6(x).parse().unwrap();
            assert!((back - x).abs() <= 5e-6 * x.abs());
        }
    }

    #[test]
    fn empty_allocation_gives_zero_rows() {
        let s = case_study();
        let agents: Vec<Agent> = s.agents();
        let alloc = allocation_from(
            &s.m0(),
            &agents,
            s.effective_budget(),
            vec![0.0; agents.len()],
            7.219268219,
            None,
        )
        .unwrap();
        let report = Report::from_allocation("empty", &s, &alloc).unwrap();
        assert!(report.rows.iter().all(|r| r.mu == 0.0 && r.cost == 0.0));
        assert_eq!(report.summary.total_cost, 0.0);
        let csv = report.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.contains("\n2a,2,0,0,,,\n"));
        assert!(csv.contains("total_cost=0,total_payment=\n"));
    }
}
