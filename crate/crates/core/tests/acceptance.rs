//! End-to-end acceptance run. Each criterion prints one `PASS`/`FAIL` line;
//! run with `--nocapture` to see them.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use statgames::demo::{run_demo, DemoConfig, ACCEPT_SLACK, GAIN_A, OBSERVATION, OFFSET_B, SIGMA};
use statgames::harness::{run_suite, SuiteConfig, SuiteReport};
use statgames::lens::Instance;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn suite(name: &str, instance: Instance, trials: usize, max_dim: usize, tol: f64) -> SuiteReport {
    let mut cfg = SuiteConfig::new(name, instance).unwrap();
    cfg.trials = trials;
    cfg.max_dim = max_dim;
    cfg.tolerance = tol;
    run_suite(&cfg).unwrap()
}

fn diag(r: &SuiteReport, key: &str) -> f64 {
    r.diagnostics.get(key).copied().unwrap_or(f64::NAN)
}

fn brief(r: &SuiteReport) -> String {
    format!(
        "{}/{} {}/{} passed, worst {:.2e}",
        r.suite, r.instance, r.passed, r.trials, r.worst_abs_err
    )
}

fn buco() -> Verdict {
    let start = Instant::now();
    let d = suite("buco", Instance::Discrete, 500, 5, 1e-9);
    let elapsed = start.elapsed();
    let g = suite("buco", Instance::Gaussian, 100, 3, 1e-8);
    Verdict {
        name: "buco",
        pass: d.ok() && g.ok() && elapsed < Duration::from_secs(10),
        detail: format!("{}; {}; discrete took {:.2?}", brief(&d), brief(&g), elapsed),
    }
}

fn chain_rule() -> Verdict {
    let r = suite("chain-rule", Instance::Discrete, 500, 5, 1e-9);
    Verdict { name: "chain-rule", pass: r.ok(), detail: brief(&r) }
}

fn kl_strict() -> Verdict {
    let r = suite("kl-strict", Instance::Discrete, 200, 5, 1e-9);
    Verdict { name: "kl-strict", pass: r.ok(), detail: brief(&r) }
}

fn mle_lax() -> Verdict {
    let r = suite("mle-lax", Instance::Discrete, 200, 5, 1e-9);
    let min_k = -diag(&r, "negated_min_K");
    Verdict {
        name: "mle-lax",
        pass: r.ok() && min_k >= -1e-12,
        detail: format!("{}, min K {min_k:.2e}", brief(&r)),
    }
}

fn fe_identities() -> Verdict {
    let sum = suite("fe-sum", Instance::Discrete, 200, 5, 1e-12);
    let joint = suite("fe-joint", Instance::Discrete, 100, 5, 1e-9);
    let thermo = suite("thermo", Instance::Discrete, 200, 5, 1e-9);
    Verdict {
        name: "fe-identities",
        pass: sum.ok() && joint.ok() && thermo.ok(),
        detail: format!("{}; {}; {}", brief(&sum), brief(&joint), brief(&thermo)),
    }
}

fn laxators() -> Verdict {
    let d = suite("laxators", Instance::Discrete, 200, 5, 1e-8);
    let g = suite("laxators", Instance::Gaussian, 200, 3, 1e-8);
    let mut cfg = SuiteConfig::new("laxators", Instance::Discrete).unwrap();
    cfg.product_priors = true;
    cfg.tolerance = 1e-8;
    let product = run_suite(&cfg).unwrap();
    let zero = diag(&product, "max_abs_laxator");
    Verdict {
        name: "laxators",
        pass: d.ok() && g.ok() && product.ok() && zero <= 1e-12,
        detail: format!("{}; {}; product priors max |λ| {zero:.2e}", brief(&d), brief(&g)),
    }
}

fn lax_naturality() -> Verdict {
    let r = suite("lax-naturality", Instance::Discrete, 100, 5, 1e-8);
    Verdict { name: "lax-naturality", pass: r.ok(), detail: brief(&r) }
}

fn laplace() -> Verdict {
    let r = suite("laplace", Instance::Gaussian, 200, 3, 1e-8);
    let ratio = diag(&r, "eps_ratio_rel_dev");
    let half = diag(&r, "dim_half_gap_err");
    Verdict {
        name: "laplace",
        pass: r.ok() && ratio <= 0.01 && half < 1e-9,
        detail: format!("{}, ε ratio dev {ratio:.2e}, dim/2 err {half:.2e}", brief(&r)),
    }
}

fn bilinear() -> Verdict {
    let r = suite("bilinear", Instance::Discrete, 500, 5, 1e-12);
    Verdict { name: "bilinear", pass: r.ok(), detail: brief(&r) }
}

fn demo() -> Verdict {
    let cfg = DemoConfig::default();
    let start = Instant::now();
    let run = run_demo(&cfg).unwrap();
    let elapsed = start.elapsed();
    let again = run_demo(&cfg).unwrap();
    // y ~ N(b, a² + σ²) under the standard normal prior
    let var = GAIN_A * GAIN_A + SIGMA * SIGMA;
    let neg_log_evidence = 0.5 * (2.0 * PI * var).ln() + (OBSERVATION - OFFSET_B).powi(2) / (2.0 * var);
    let last = run.last();
    let monotone = run.rows.windows(2).all(|w| w[1].fe <= w[0].fe + ACCEPT_SLACK);
    let pass = run == again
        && last.kl < 1e-2
        && (last.fe - neg_log_evidence).abs() < 1e-2
        && monotone
        && elapsed < Duration::from_secs(5);
    Verdict {
        name: "demo",
        pass,
        detail: format!(
            "kl {:.2e}, fe {:.6} vs -log evidence {neg_log_evidence:.6}, monotone {monotone}, {:.2?}",
            last.kl, last.fe, elapsed
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: [fn() -> Verdict; 10] =
        [buco, chain_rule, kl_strict, mle_lax, fe_identities, laxators, lax_naturality, laplace, bilinear, demo];
    let verdicts: Vec<Verdict> = criteria.iter().map(|c| c()).collect();
    for (i, v) in verdicts.iter().enumerate() {
        println!("{} {:>2} {:<15} {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.name, v.detail);
    }
    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
