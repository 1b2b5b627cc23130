//! Built-in reproduction tables. Each table fixes a model and a γ grid; the
//! sample size and seed come from the caller.

use crate::baselines::{asmussen_kroese, default_isve_theta, isve, variance_boosted};
use crate::error::{Error, Result};
use crate::lefttail::{estimate_cdf, estimate_cdf_simple, estimate_pdf};
use crate::model::SlnModel;
use crate::righttail::{ell_as, estimate_right_tail};
use crate::rng_qmc::UniformStream;
use crate::stats::{format_sci_log, LogEstimate};
use std::io::Write;
use std::time::Instant;

pub struct TableInfo {
    pub id: &'static str,
    pub caption: &'static str,
}

pub const TABLES: &[TableInfo] = &[
    TableInfo { id: "1", caption: "CDF, d=20, nu=0, Sigma=diag(1..20); gamma 12..1" },
    TableInfo { id: "2", caption: "CDF, d=10, nu_k=k-10, sigma_k^2=k; gamma 1..1e-6" },
    TableInfo {
        id: "3",
        caption: "asymptotic approximation, d=10, Sigma=0.25^2(0.9*11'+0.1*I); gamma 15..3500",
    },
    TableInfo {
        id: "4",
        caption: "product vs tilted CDF estimator, nu=(4,4,4,4), Sigma=[1 2 2 2;2 5 4 4;2 4 4.5 4;2 4 4 4.5]",
    },
    TableInfo { id: "5", caption: "right tail, d=30 iid sigma=0.25; gamma 30..90 step 3; new vs AK vs var-boost" },
    TableInfo {
        id: "6",
        caption: "right tail, d=30, Sigma=0.25^2(0.9*11'+0.1*I); new vs ISVE with hand-picked theta",
    },
    TableInfo { id: "7", caption: "PDF, d=32, nu=0, Sigma=0.5*11'+0.5*I; gamma 140..15" },
    TableInfo { id: "8", caption: "PDF, d=10, nu_i=i-10, sigma_i^2=i; gamma 500..0.5" },
    TableInfo { id: "9", caption: "right tail, d=60, nu=0, Sigma=0.5*11'+0.5*I; gamma 600..3300; new vs ISVE" },
    TableInfo {
        id: "cdf-corr",
        caption: "CDF, d=50, nu linspace(0,0.25), Sigma=0.25^2(0.25*11'+0.75*I); gamma 40..22",
    },
    TableInfo { id: "fig5", caption: "variance-boosted RE over a theta grid, d=30 iid sigma=0.25, gamma=45" },
];

/// CSV-ready table.
#[derive(Debug, Clone)]
pub struct Table {
    pub id: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(id: &str, header: &[&str]) -> Self {
        let mut h: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        h.push("seed".into());
        h.push("seconds".into());
        Table { id: id.into(), header: h, rows: Vec::new() }
    }

    fn push(&mut self, mut cells: Vec<String>, seed: u64, t0: Instant) {
        cells.push(seed.to_string());
        cells.push(format!("{:.3}", t0.elapsed().as_secs_f64()));
        self.rows.push(cells);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Three significant digits.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor();
    if (-3.0..4.0).contains(&e) {
        format!("{:.*}", (2.0 - e).max(0.0) as usize, x)
    } else {
        format!("{x:.2e}")
    }
}

fn sci(e: &LogEstimate) -> String {
    format_sci_log(e.log_mean, e.sign)
}

fn log10(e: &LogEstimate) -> String {
    format!("{:.6}", e.log10_mean())
}

fn stream(seed: u64, row: usize, which: u64, dim: usize) -> UniformStream {
    UniformStream::pseudo_substream(seed, ((row as u64) << 8) | which, dim)
}

pub fn table1_model() -> SlnModel {
    let var: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    SlnModel::independent(vec![0.0; 20], &var).expect("valid")
}

pub fn table2_model() -> SlnModel {
    let var: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let nu: Vec<f64> = (1..=10).map(|k| k as f64 - 10.0).collect();
    SlnModel::independent(nu, &var).expect("valid")
}

pub fn table3_model() -> SlnModel {
    SlnModel::equicorrelated(10, 0.9, 0.0625, vec![0.0; 10]).expect("valid")
}

pub fn table4_model() -> SlnModel {
    let rows = vec![
        vec![1.0, 2.0, 2.0, 2.0],
        vec![2.0, 5.0, 4.0, 4.0],
        vec![2.0, 4.0, 4.5, 4.0],
        vec![2.0, 4.0, 4.0, 4.5],
    ];
    SlnModel::from_rows(vec![4.0; 4], &rows).expect("valid")
}

pub fn table5_model() -> SlnModel {
    SlnModel::independent(vec![0.0; 30], &[0.0625; 30]).expect("valid")
}

pub fn table6_model() -> SlnModel {
    SlnModel::equicorrelated(30, 0.9, 0.0625, vec![0.0; 30]).expect("valid")
}

pub fn table7_model() -> SlnModel {
    SlnModel::equicorrelated(32, 0.5, 1.0, vec![0.0; 32]).expect("valid")
}

pub fn table9_model() -> SlnModel {
    SlnModel::equicorrelated(60, 0.5, 1.0, vec![0.0; 60]).expect("valid")
}

pub fn cdf_corr_model() -> SlnModel {
    let nu: Vec<f64> = (0..50).map(|i| 0.25 * i as f64 / 49.0).collect();
    SlnModel::equicorrelated(50, 0.25, 0.0625, nu).expect("valid")
}

/// Runs table `id` with `n` replications per estimate.
pub fn run_table(id: &str, n: u64, seed: u64) -> Result<Table> {
    match id {
        "1" => cdf_table("1", &table1_model(), &[12.0, 10.0, 8.0, 6.0, 4.0, 3.0, 2.0, 1.0], n, seed),
        "2" => cdf_table("2", &table2_model(), &[1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6], n, seed),
        "cdf-corr" => {
            let g: Vec<f64> = (0..10).map(|i| 40.0 - 2.0 * i as f64).collect();
            cdf_table("cdf-corr", &cdf_corr_model(), &g, n, seed)
        }
        "3" => table3(n, seed),
        "4" => table4(n, seed),
        "5" => table5(n, seed),
        "6" => {
            let rows = [
                (40.0, 0.5),
                (100.0, 0.6),
                (150.0, 0.75),
                (200.0, 0.8),
                (400.0, 0.9),
                (1e3, 0.95),
                (1e4, default_isve_theta(1e4)),
            ];
            isve_table("6", &table6_model(), &rows, n, seed)
        }
        "7" => pdf_table("7", &table7_model(), &[140.0, 100.0, 80.0, 60.0, 50.0, 40.0, 30.0, 20.0, 15.0], n, seed),
        "8" => pdf_table("8", &table2_model(), &[500.0, 100.0, 30.0, 15.0, 7.0, 3.0, 1.0, 0.5], n, seed),
        "9" => {
            let rows: Vec<(f64, f64)> = (0..10)
                .map(|i| {
                    let g = 600.0 + 300.0 * i as f64;
                    (g, default_isve_theta(g))
                })
                .collect();
            isve_table("9", &table9_model(), &rows, n, seed)
        }
        "fig5" => fig5(n, seed),
        other => Err(Error::Config(format!(
            "unknown table '{other}'; expected one of {}",
            TABLES.iter().map(|t| t.id).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn cdf_table(id: &str, model: &SlnModel, gammas: &[f64], n: u64, seed: u64) -> Result<Table> {
    let mut t = Table::new(id, &["gamma", "ell_hat", "log10_ell_hat", "re_percent", "wnrv", "fallback"]);
    for (row, &g) in gammas.iter().enumerate() {
        let t0 = Instant::now();
        let e = estimate_cdf(model, g, n, &stream(seed, row, 0, model.dim()))?;
        t.push(
            vec![sig3(g), sci(&e), log10(&e), sig3(e.re_percent), sig3(e.wnrv()), e.flags.optimizer_fallback.to_string()],
            seed,
            t0,
        );
    }
    Ok(t)
}

fn pdf_table(id: &str, model: &SlnModel, gammas: &[f64], n: u64, seed: u64) -> Result<Table> {
    let mut t = Table::new(id, &["gamma", "ell_hat", "f_hat", "log10_f_hat", "re_f_percent", "wnrv_f"]);
    for (row, &g) in gammas.iter().enumerate() {
        let t0 = Instant::now();
        let c = estimate_cdf(model, g, n, &stream(seed, row, 0, model.dim()))?;
        let f = estimate_pdf(model, g, n, &stream(seed, row, 1, model.dim()))?;
        t.push(vec![sig3(g), sci(&c), sci(&f), log10(&f), sig3(f.re_percent), sig3(f.wnrv())], seed, t0);
    }
    Ok(t)
}

fn table3(n: u64, seed: u64) -> Result<Table> {
    let model = table3_model();
    let mut t = Table::new(
        "3",
        &["gamma", "ell_as", "log10_ell_as", "ell_hat", "ci95_halfwidth", "rel_gap", "re_percent"],
    );
    let gammas = [15.0, 20.0, 40.0, 60.0, 100.0, 500.0, 1000.0, 1500.0, 2500.0, 3500.0];
    for (row, &g) in gammas.iter().enumerate() {
        let t0 = Instant::now();
        let las = ell_as(&model, g)?;
        let r = estimate_right_tail(&model, g, n, &stream(seed, row, 0, model.dim()))?;
        let e = &r.estimate;
        let half = 1.96 * e.log_std_error().exp();
        // (ℓ̂ − ℓ_as)/ℓ_as kept in log space
        let diff = e.log_mean - las;
        let (lgap, sgn) = if diff > 0.0 {
            (diff + (-(-diff).exp()).ln_1p(), 1.0)
        } else if diff < 0.0 {
            ((-(diff.exp())).ln_1p(), -1.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        t.push(
            vec![
                sig3(g),
                format_sci_log(las, 1.0),
                format!("{:.6}", las / std::f64::consts::LN_10),
                sci(e),
                format!("{half:.2e}"),
                format_sci_log(lgap, sgn),
                sig3(e.re_percent),
            ],
            seed,
            t0,
        );
    }
    Ok(t)
}

fn table4(n: u64, seed: u64) -> Result<Table> {
    let model = table4_model();
    let mut t = Table::new("4", &["gamma", "ell0_hat", "ell_hat", "re0_percent", "re_percent", "log10_ell0_hat"]);
    let gammas = [10.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    for (row, &g) in gammas.iter().enumerate() {
        let t0 = Instant::now();
        let e0 = estimate_cdf_simple(&model, g, n, &stream(seed, row, 0, 4))?;
        let e = estimate_cdf(&model, g, n, &stream(seed, row, 1, 4))?;
        t.push(vec![sig3(g), sci(&e0), sci(&e), sig3(e0.re_percent), sig3(e.re_percent), log10(&e0)], seed, t0);
    }
    Ok(t)
}

fn table5(n: u64, seed: u64) -> Result<Table> {
    let model = table5_model();
    let mut t = Table::new(
        "5",
        &[
            "gamma",
            "ell_hat",
            "ell_ak",
            "re_percent",
            "re_ak_percent",
            "re_theta_percent",
            "theta",
            "wnrv",
            "wnrv_ak",
            "log10_ell_hat",
        ],
    );
    for row in 0..21 {
        let g = 30.0 + 3.0 * row as f64;
        let t0 = Instant::now();
        let e = estimate_right_tail(&model, g, n, &stream(seed, row, 0, 30))?.estimate;
        let ak = asmussen_kroese(&model, g, n, &stream(seed, row, 1, 29))?;
        let theta = default_isve_theta(g);
        let vb = variance_boosted(&model, g, theta, n, &stream(seed, row, 2, 30))?;
        t.push(
            vec![
                sig3(g),
                sci(&e),
                sci(&ak),
                sig3(e.re_percent),
                sig3(ak.re_percent),
                sig3(vb.re_percent),
                format!("{theta:.3}"),
                sig3(e.wnrv()),
                sig3(ak.wnrv()),
                log10(&e),
            ],
            seed,
            t0,
        );
    }
    Ok(t)
}

fn isve_table(id: &str, model: &SlnModel, rows: &[(f64, f64)], n: u64, seed: u64) -> Result<Table> {
    let d = model.dim();
    let mut t = Table::new(
        id,
        &["gamma", "ell_hat", "ell_isve", "theta", "re_percent", "re_isve_percent", "wnrv", "wnrv_isve"],
    );
    for (row, &(g, theta)) in rows.iter().enumerate() {
        let t0 = Instant::now();
        let e = estimate_right_tail(model, g, n, &stream(seed, row, 0, d))?.estimate;
        let i = isve(model, g, theta, n / 2, n - n / 2, &stream(seed, row, 1, d))?.estimate;
        t.push(
            vec![
                sig3(g),
                sci(&e),
                sci(&i),
                format!("{theta:.3}"),
                sig3(e.re_percent),
                sig3(i.re_percent),
                sig3(e.wnrv()),
                sig3(i.wnrv()),
            ],
            seed,
            t0,
        );
    }
    Ok(t)
}

/// θ values swept by the variance-boosted comparison.
pub fn fig5_thetas() -> Vec<f64> {
    let mut v: Vec<f64> = (1..20).map(|i| 0.05 * i as f64).collect();
    v.push(0.71);
    v.sort_by(f64::total_cmp);
    v
}

fn fig5(n: u64, seed: u64) -> Result<Table> {
    let model = table5_model();
    let g = 45.0;
    let mut t = Table::new("fig5", &["estimator", "theta", "estimate", "log10_estimate", "re_percent"]);
    let t0 = Instant::now();
    let e = estimate_right_tail(&model, g, n, &stream(seed, 0, 0, 30))?.estimate;
    t.push(vec!["new".into(), String::new(), sci(&e), log10(&e), sig3(e.re_percent)], seed, t0);
    for (row, theta) in fig5_thetas().into_iter().enumerate() {
        let t0 = Instant::now();
        let v = variance_boosted(&model, g, theta, n, &stream(seed, row + 1, 2, 30))?;
        t.push(
            vec!["var-boost".into(), format!("{theta:.2}"), sci(&v), log10(&v), sig3(v.re_percent)],
            seed,
            t0,
        );
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig3_examples() {
        assert_eq!(sig3(0.198), "0.198");
        assert_eq!(sig3(12.0), "12.0");
        assert_eq!(sig3(1e-6), "1.00e-6");
        assert_eq!(sig3(3300.0), "3300");
        assert_eq!(sig3(0.0), "0");
    }

    #[test]
    fn unknown_table_is_config_error() {
        assert!(matches!(run_table("42", 10, 1), Err(Error::Config(_))));
    }

    #[test]
    fn table3_asymptotic_column() {
        let t = run_table("3", 200, 1).unwrap();
        let col = t.column("ell_as").unwrap();
        assert_eq!(col[0], "1.21e-26");
        assert_eq!(col[9], "5.19e-233");
        assert_eq!(t.rows.len(), 10);
    }

    #[test]
    fn small_tables_have_expected_shape() {
        let t = run_table("4", 500, 3).unwrap();
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.header.last().unwrap(), "seconds");
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("gamma,ell0_hat,ell_hat"));
        assert_eq!(text.lines().count(), 9);
    }
}
