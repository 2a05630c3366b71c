//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the terminal.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use hdnorm::generators::random_orthogonal;
use hdnorm::harness::{parse_summary_csv, CellResult};
use hdnorm::montecarlo::Selection;
use hdnorm::streams::{open_uniform, standard_normal, stream, Stream};
use hdnorm::{
    central_quantile_statistic, effective_ranks, iqr_statistic, quasi_range_statistic,
    range_statistic, run_experiment, squared_radii_statistics, tr_sigma_sq_hat,
    tr_sigma_sq_oracle, DataMatrix, Experiment, RadialSummary,
};
use nalgebra::DMatrix;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load(name: &str) -> Experiment {
    let text = fs::read_to_string(repo_root().join("tables").join(name)).unwrap();
    Experiment::from_json(&text).unwrap()
}

fn rate(cell: &CellResult, procedure: &str) -> f64 {
    cell.outcomes
        .iter()
        .find(|o| o.procedure == procedure)
        .unwrap_or_else(|| panic!("no outcome for {procedure}"))
        .rate
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn simulate_with_threads(spec: &Path, threads: usize) -> Result<Vec<u8>, String> {
    let out = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_hdnorm"))
        .env("HDNORM_THREADS", threads.to_string())
        .arg("simulate")
        .arg(spec)
        .arg("--out")
        .arg(out.path())
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    fs::read(out.path().join("table1_desk.csv")).map_err(|e| e.to_string())
}

struct Table1 {
    single: Result<Vec<u8>, String>,
    multi: Result<Vec<u8>, String>,
    secs: [f64; 2],
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn table1_size(t: &Table1) -> Verdict {
    let bytes = t.single.as_ref().map_err(Clone::clone)?;
    let rows = parse_summary_csv(std::str::from_utf8(bytes).unwrap()).map_err(|e| e.to_string())?;
    let rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let inside = rates.iter().all(|r| (0.032..=0.068).contains(r));
    check(
        rows.len() == 12 && inside,
        format!(
            "{} cells, sizes in [{lo:.4}, {hi:.4}], required [0.032, 0.068]; simulate took {:.1}s",
            rows.len(),
            t.secs[0]
        ),
    )
}

fn determinism(t: &Table1) -> Verdict {
    let a = t.single.as_ref().map_err(Clone::clone)?;
    let b = t.multi.as_ref().map_err(Clone::clone)?;
    check(
        a == b,
        format!(
            "1-thread and 8-thread CSVs ({} bytes) identical: {}; 8-thread simulate took {:.1}s",
            a.len(),
            a == b,
            t.secs[1]
        ),
    )
}

fn scale_mixture_power() -> Verdict {
    let r = rate(&run_experiment(&load("table2_scale_mixture.json")).unwrap()[0], "composite");
    check(r >= 0.99, format!("power {r:.4}, required >= 0.99"))
}

fn multivariate_t_power() -> Verdict {
    let r = rate(&run_experiment(&load("table3_multivariate_t.json")).unwrap()[0], "composite");
    check(r >= 0.93, format!("power {r:.4}, required >= 0.93"))
}

fn chi_square_power() -> Verdict {
    let res = run_experiment(&load("table4_chisq.json")).unwrap();
    let (low_dof, high_dof) = (rate(&res[0], "composite"), rate(&res[1], "composite"));
    check(
        low_dof >= 0.95 && (0.10..=0.30).contains(&high_dof),
        format!("nu=3 power {low_dof:.4} (>= 0.95), nu=20 power {high_dof:.4} (in [0.10, 0.30])"),
    )
}

fn high_dimension() -> Verdict {
    let size = rate(&run_experiment(&load("high_dim_null.json")).unwrap()[0], "composite");
    let power = rate(&run_experiment(&load("high_dim_power.json")).unwrap()[0], "composite");
    check(
        (0.035..=0.065).contains(&size) && power >= 0.90,
        format!("size {size:.4} (in [0.035, 0.065]), loc-mixture power {power:.4} (>= 0.90)"),
    )
}

fn squared_contrast() -> Verdict {
    let e = load("squared_contrast.json");
    assert_eq!(e.procedures, vec![Selection::Composite, Selection::Squared]);
    let cell = &run_experiment(&e).unwrap()[0];
    let (radii, squared) = (rate(cell, "composite"), rate(cell, "squared"));
    check(
        squared > 0.10 && radii <= 0.08,
        format!("squared size {squared:.4} (> 0.10), radii size {radii:.4} (<= 0.08)"),
    )
}

fn log_uniform(rng: &mut Stream, lo_exp: f64, hi_exp: f64) -> f64 {
    10f64.powf(lo_exp + (hi_exp - lo_exp) * open_uniform(rng))
}

fn oracle_equivalence() -> Verdict {
    let mut rng = stream(707, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 4 + (open_uniform(&mut rng) * 17.0) as usize;
        let d = 1 + (open_uniform(&mut rng) * 15.0) as usize;
        let data: Vec<f64> = (0..n * d)
            .map(|_| {
                let sign = if open_uniform(&mut rng) < 0.5 { -1.0 } else { 1.0 };
                sign * log_uniform(&mut rng, -3.0, 3.0)
            })
            .collect();
        let x = DataMatrix::from_row_slice(n, d, &data).unwrap();
        let fast = tr_sigma_sq_hat(&x).unwrap();
        let oracle = tr_sigma_sq_oracle(&x).unwrap();
        worst = worst.max((fast - oracle).abs() / (1.0 + oracle.abs()));
    }
    check(
        worst <= 1e-8,
        format!("200 matrices, worst scaled difference {worst:.2e}, required <= 1e-8"),
    )
}

/// Every similarity-invariant quantity of a sample, plus `Δ̂`.
fn invariants(x: &DataMatrix) -> (Vec<f64>, f64) {
    let s = RadialSummary::new(x).unwrap();
    let (t2, tstar2) = squared_radii_statistics(&s).unwrap();
    let mut values = vec![
        range_statistic(&s).unwrap().value,
        iqr_statistic(&s).unwrap().value,
        quasi_range_statistic(&s, 3).unwrap().value,
        central_quantile_statistic(&s, &[0.6, 0.75, 0.9]).unwrap().value,
        t2.value,
        tstar2.value,
    ];
    values.extend(&s.standardized);
    let c = x.centered();
    let cov = c.transpose() * &c / (x.n() - 1) as f64;
    let r = effective_ranks(&cov).unwrap();
    values.extend([
        r.rho1_sigma,
        r.rho1_sigma_sq,
        r.rho2_sigma,
        r.rho2_sigma_sq,
        r.rho3,
        r.rank as f64,
    ]);
    (values, s.dispersion.delta_hat)
}

fn invariance_suite() -> Verdict {
    let mut rng = stream(808, 0);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let (n, d) = if k % 2 == 0 { (30, 50) } else { (50, 20) };
        let data: Vec<f64> = (0..n * d).map(|_| standard_normal(&mut rng)).collect();
        let x = DataMatrix::from_row_slice(n, d, &data).unwrap();
        let sigma = log_uniform(&mut rng, -2.0, 2.0);
        let v = random_orthogonal(d, &mut rng);
        let shift: Vec<f64> = (0..d).map(|_| 20.0 * open_uniform(&mut rng) - 10.0).collect();
        let mut y: DMatrix<f64> = x.values() * v.transpose() * sigma;
        for mut row in y.row_iter_mut() {
            for (value, w) in row.iter_mut().zip(&shift) {
                *value += w;
            }
        }
        let y = DataMatrix::new(y).unwrap();
        let (a, delta_x) = invariants(&x);
        let (b, delta_y) = invariants(&y);
        for (p, q) in a.iter().zip(&b) {
            worst = worst.max((p - q).abs() / (1.0 + p.abs()));
        }
        let expected = sigma * sigma * delta_x;
        worst = worst.max((delta_y - expected).abs() / expected);
    }
    check(
        worst <= 1e-9,
        format!("100 transforms, worst relative change {worst:.2e}, required <= 1e-9"),
    )
}

fn random_psd(rng: &mut Stream) -> DMatrix<f64> {
    let d = 1 + (open_uniform(rng) * 50.0) as usize;
    let k = 1 + (open_uniform(rng) * d as f64) as usize;
    let scales: Vec<f64> = (0..k).map(|_| log_uniform(rng, -2.0, 2.0)).collect();
    let w = DMatrix::from_fn(d, k, |_, j| scales[j] * standard_normal(rng));
    let s = &w * w.transpose();
    (&s + s.transpose()) * 0.5
}

fn rank_inequality_chains() -> Verdict {
    let mut rng = stream(909, 0);
    let mut violations = Vec::new();
    for m in 0..500 {
        let sigma = random_psd(&mut rng);
        let d = sigma.nrows() as f64;
        let r = effective_ranks(&sigma).unwrap();
        let le = |a: f64, b: f64| a <= b + 1e-9 * b.abs().max(1.0);
        let chain = [
            ("rho1(S^2) <= rho1(S)", r.rho1_sigma_sq, r.rho1_sigma),
            ("rho1(S) <= rho2(S)", r.rho1_sigma, r.rho2_sigma),
            ("rho2(S) <= rho1(S)^2", r.rho2_sigma, r.rho1_sigma.powi(2)),
            ("rho1(S^2) <= rho2(S^2)", r.rho1_sigma_sq, r.rho2_sigma_sq),
            ("rho2(S^2) <= rho2(S)", r.rho2_sigma_sq, r.rho2_sigma),
            ("1 <= sqrt(rho3)", 1.0, r.rho3.sqrt()),
            ("sqrt(rho3) <= rho2(S^2)", r.rho3.sqrt(), r.rho2_sigma_sq),
            ("rho2(S^2) <= rho3", r.rho2_sigma_sq, r.rho3),
            ("rho3 <= rho2(S)", r.rho3, r.rho2_sigma),
            ("rho2(S) <= rank", r.rho2_sigma, r.rank as f64),
            ("rho1(S)^2/d <= rho3", r.rho1_sigma.powi(2) / d, r.rho3),
            ("rho3 <= rho1(S)^1.5", r.rho3, r.rho1_sigma.powf(1.5)),
            ("rho3^0.25 <= rho1(S^2)", r.rho3.powf(0.25), r.rho1_sigma_sq),
            ("rho1(S^2) <= rho3", r.rho1_sigma_sq, r.rho3),
        ];
        for (name, a, b) in chain {
            if !le(a, b) {
                violations.push(format!("matrix {m}: {name} ({a} vs {b})"));
            }
        }
    }
    check(
        violations.is_empty(),
        format!(
            "500 matrices x 14 inequalities, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let spec = repo_root().join("tables/table1_desk.json");
    let (single, single_secs) = timed(|| simulate_with_threads(&spec, 1));
    let (multi, multi_secs) = timed(|| simulate_with_threads(&spec, 8));
    let table1 = Table1 {
        single,
        multi,
        secs: [single_secs, multi_secs],
    };
    let t1 = &table1;
    let criteria: Vec<Criterion> = vec![
        ("Type-I error, desk-scale null grid (Sigma_1..Sigma_4)", Box::new(|| table1_size(t1))),
        ("Power, scale mixture (Sigma_1, n=d=100)", Box::new(scale_mixture_power)),
        ("Power, multivariate t (Sigma_2, n=100, d=300)", Box::new(multivariate_t_power)),
        ("Power, standardized chi-square marginals (Sigma_3)", Box::new(chi_square_power)),
        ("High-dimension size (Sigma_5) and location-mixture power", Box::new(high_dimension)),
        ("Squared-radii contrast (Sigma_2, n=100, d=20)", Box::new(squared_contrast)),
        ("Fast estimator equals brute-force oracle", Box::new(oracle_equivalence)),
        ("Similarity invariance suite", Box::new(invariance_suite)),
        ("Effective-rank inequality chains", Box::new(rank_inequality_chains)),
        ("Determinism across thread counts", Box::new(|| determinism(t1))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (verdict, secs) = timed(run);
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {:>2}: {name}: {detail} [{secs:.1}s]", i + 1);
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
