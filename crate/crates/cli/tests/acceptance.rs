//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `UNATTAINABLE` are expected to fail; the run aborts
//! if any other criterion fails or if an unattainable one starts passing.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use switchlab::control::{chi_d_power_iteration, periodic_chi};
use switchlab::measure::{lyapunov_chi, stationarity_residual_of, InvariantMeasure};
use switchlab::simulate::{
    derive_seed, estimate_chi_mc, estimate_chi_p, jump_count_mgf, mean_stderr,
    pathwise_convergence_stat, stream_rng, SwitchingLaw,
};
use switchlab::system::{angular_drift, Mode, SystemParams};
use switchlab::tail::{default_hill_k, hill_tail_index, moment_root_x1};
use switchlab_cli::sweep::{
    erlang_curves, profile, sign_region, zero_crossings, ErlangConfig, ProfileConfig, SignConfig,
};
use switchlab_cli::tail_cmd::{tail_report, TailConfig};

/// σ_min > 1 is impossible for a product of exponentials of Hurwitz 2×2
/// matrices: its determinant is `e^{Σ t_j tr A_j} < 1`.
const UNATTAINABLE: &[usize] = &[11];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn params(a: f64, b: f64, beta: f64, u: f64) -> SystemParams {
    SystemParams::new(a, b, beta, u).unwrap()
}

fn limits() -> Verdict {
    let lo = lyapunov_chi(&params(0.15, 3.0, 1e-3, 0.5)).unwrap().value;
    let hi = lyapunov_chi(&params(0.15, 3.0, 1e3, 0.5)).unwrap().value;
    let pass = (lo + 0.15).abs() <= 0.01 && (hi + 0.15).abs() <= 0.01;
    verdict(pass, format!("chi(1e-3) = {lo:.6}, chi(1e3) = {hi:.6}"))
}

fn bump() -> Verdict {
    let cfg = ProfileConfig::load(None, &[]).unwrap();
    let prof = profile(&cfg, 0).unwrap();
    let chi: Vec<f64> = prof.curve.iter().map(|r| r.chi).collect();
    let crossings = zero_crossings(&chi);
    let (k, max) =
        chi.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, &c)| {
                if c > acc.1 {
                    (k, c)
                } else {
                    acc
                }
            },
        );
    let ok = prof.curve.iter().all(|r| r.ok());
    verdict(
        ok && crossings == 2 && max > 0.0,
        format!(
            "{crossings} crossings, max {max:.6} at beta {:.4}",
            prof.curve[k].beta
        ),
    )
}

fn quadrature_vs_mc() -> Verdict {
    let points = [
        (0.15, 3.0, 0.1, 0.5),
        (0.15, 3.0, 1.0, 0.5),
        (0.15, 3.0, 3.0, 0.5),
        (0.15, 3.0, 20.0, 0.5),
        (0.1, 2.5, 2.0, 0.3),
    ];
    let mut worst: f64 = 0.0;
    for (k, &(a, b, beta, u)) in points.iter().enumerate() {
        let p = params(a, b, beta, u);
        let q = lyapunov_chi(&p).unwrap().value;
        let mc = estimate_chi_mc(
            &p,
            SwitchingLaw::Exponential,
            1e4,
            64,
            derive_seed(3, k as u64),
        )
        .unwrap();
        worst = worst.max((q - mc.value).abs() / mc.error);
    }
    verdict(worst <= 3.0, format!("max |z| = {worst:.3} over 5 points"))
}

fn measure_validity() -> Verdict {
    let mut rng = stream_rng(4, 0);
    let (mut norm, mut rel, mut stat, mut ode) = (0f64, 0f64, 0f64, 0f64);
    for _ in 0..20 {
        let p = params(
            rng.gen_range(0.05..0.5),
            rng.gen_range(1.5..5.0),
            rng.gen_range(0.1..20.0),
            rng.gen_range(0.1..0.9),
        );
        let dp = InvariantMeasure::new(&p).unwrap().density_pair().unwrap();
        let c = dp.constants().big_c;
        norm = norm.max((dp.total_mass().unwrap() - 1.0).abs());
        for j in 0..1000 {
            let th = 2.0 * PI * j as f64 / 1000.0;
            let (r0, r1) = dp.eval(th).unwrap();
            let lhs =
                angular_drift(th, Mode::Zero, &p) * r0 + angular_drift(th, Mode::One, &p) * r1;
            rel = rel.max((lhs - c).abs());
        }
        stat = stat.max(stationarity_residual_of(&dp, 4));
        let thetas: Vec<f64> = (0..200)
            .map(|j| 0.013 + 2.0 * PI * j as f64 / 200.0)
            .collect();
        ode = ode.max(dp.phi_ode_residual(&thetas, 1e-5).unwrap());
    }
    verdict(
        norm <= 1e-8 && rel <= 1e-9 && stat <= 1e-6 && ode <= 1e-5,
        format!("mass {norm:.1e}, pointwise {rel:.1e}, stationarity {stat:.1e}, ode {ode:.1e}"),
    )
}

/// Trace of `B1(τ1) B0(τ0)` written out from the rotation factors.
fn period_trace(b: f64, t0: f64, t1: f64) -> f64 {
    let (s0, c0) = t0.sin_cos();
    let (s1, c1) = t1.sin_cos();
    let m0 = [[c0, b * s0], [-s0 / b, c0]];
    let m1 = [[c1, s1 / b], [-b * s1, c1]];
    let p00 = m1[0][0] * m0[0][0] + m1[0][1] * m0[1][0];
    let p11 = m1[1][0] * m0[0][1] + m1[1][1] * m0[1][1];
    p00 + p11
}

fn deterministic_exponent() -> Verdict {
    let (a, b) = (0.1, 2.0);
    let peak = params(a, b, 4.0 / PI, 0.5);
    let rep = periodic_chi(&peak);
    let closed = (rep.chi_d - (-0.1 + 4f64.ln() / PI)).abs();
    let resonance = (periodic_chi(&params(a, b, 2.0 / PI, 0.5)).chi_d + a).abs();
    let complex_beta = (1..400)
        .map(|j| 0.05 + 0.05 * j as f64)
        .find(|&beta| period_trace(b, 2.0 / beta, 2.0 / beta).abs() < 1.9)
        .expect("some beta has |trace| < 2");
    let complex = (periodic_chi(&params(a, b, complex_beta, 0.5)).chi_d + a).abs();
    let mut rng = stream_rng(5, 0);
    let mut power: f64 = 0.0;
    for _ in 0..100 {
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let x0 = [th.cos(), th.sin()];
        power = power.max((chi_d_power_iteration(&peak, x0, 200).unwrap() - rep.chi_d).abs());
    }
    let period = PI;
    let tr = period_trace(b, period / 2.0, period / 2.0).abs();
    let rho = 0.5 * (tr + (tr * tr - 4.0).sqrt());
    let alternate_expected = -a - rho.ln() / period;
    let (_, v2) = rep.eigenvectors().expect("real split at 4/pi");
    let alternate = chi_d_power_iteration(&peak, v2, 200).unwrap();
    let alt_err = (alternate - alternate_expected).abs();
    let pass = closed <= 1e-10
        && resonance <= 1e-12
        && complex <= 1e-12
        && power <= 1e-6
        && alt_err <= 1e-6;
    verdict(
        pass,
        format!(
            "closed {closed:.1e}, 2/pi {resonance:.1e}, complex at {complex_beta:.2} {complex:.1e}, \
             power {power:.1e}, lambda2 start {alternate:.6} (err {alt_err:.1e})"
        ),
    )
}

fn sign_region_criterion() -> Verdict {
    let cfg = SignConfig::load(None, &[]).unwrap();
    let region = sign_region(&cfg).unwrap();
    let worst = region
        .contours
        .iter()
        .flatten()
        .map(|p| p.chi.abs())
        .fold(0.0, f64::max);
    let pass = region.positive_cells() > 0
        && !region.touches_boundary()
        && region.failed() == 0
        && worst <= 1e-3;
    verdict(
        pass,
        format!(
            "{} positive cells, touches boundary {}, max |chi| on contour {worst:.1e}",
            region.positive_cells(),
            region.touches_boundary()
        ),
    )
}

fn erlang_double_bump() -> Verdict {
    let cfg = ErlangConfig::load(None, &[]).unwrap();
    let curves = erlang_curves(&cfg, 7).unwrap();
    let at50 = curves
        .iter()
        .find(|c| c.n == 50)
        .expect("n = 50 on the default list");
    let intervals = at50.positive_intervals().len();
    let gaps: Vec<f64> = curves.iter().map(|c| c.max_gap()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    verdict(
        intervals >= 2 && monotone,
        format!("{intervals} positive intervals at n = 50, max gaps {gaps:.4?}"),
    )
}

fn pathwise_convergence() -> Verdict {
    let p = params(0.15, 3.0, 2.0, 0.5);
    let means: Vec<f64> = [10, 50, 200]
        .iter()
        .map(|&n| pathwise_convergence_stat(&p, n, 20.0, 64, 11).unwrap().mean)
        .collect();
    verdict(
        means.windows(2).all(|w| w[1] < w[0]),
        format!("E sup gap {means:.4?} for n = 10, 50, 200"),
    )
}

fn generating_function() -> Verdict {
    let (l0, l1, c, t): (f64, f64, f64, f64) = (1.0, 3.0, 1.2, 2.0);
    let mut rng = stream_rng(9, 0);
    let vals: Vec<f64> = (0..200_000)
        .map(|_| {
            let (mut clock, mut rate, mut n) = (0.0, l0, 0);
            loop {
                let e: f64 = Exp1.sample(&mut rng);
                clock += e / rate;
                if clock > t {
                    break c.powi(n);
                }
                n += 1;
                rate = if rate == l0 { l1 } else { l0 };
            }
        })
        .collect();
    let (m, se) = mean_stderr(&vals);
    let g = jump_count_mgf(c, t, l0, l1, Mode::Zero);
    let z = (m - g).abs() / se;
    let mut reduction: f64 = 0.0;
    for &(lam, c, t) in &[(1.5f64, 2.0f64, 1.3f64), (0.4, 0.5, 3.0), (2.0, 1.2, 2.0)] {
        let exact = (lam * t * (c - 1.0)).exp();
        for mode in [Mode::Zero, Mode::One] {
            reduction = reduction.max((jump_count_mgf(c, t, lam, lam, mode) - exact).abs() / exact);
        }
    }
    verdict(
        z <= 3.0 && reduction <= 1e-12,
        format!("mgf {g:.6} vs MC {m:.6} (|z| = {z:.2}), equal-rate error {reduction:.1e}"),
    )
}

fn jensen() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut lines = Vec::new();
    for (j, &beta) in [1.0, 20.0].iter().enumerate() {
        let p = params(0.15, 3.0, beta, 0.5);
        let base = estimate_chi_mc(
            &p,
            SwitchingLaw::Exponential,
            20.0,
            2000,
            derive_seed(10, j as u64),
        )
        .unwrap();
        for (k, &q) in [0.5, 1.0, 2.0].iter().enumerate() {
            let e = estimate_chi_p(
                &p,
                q,
                20.0,
                64,
                200,
                derive_seed(10, 10 + 3 * j as u64 + k as u64),
            )
            .unwrap();
            let slack = 3.0 * (e.stderr.powi(2) + base.error.powi(2)).sqrt();
            worst = worst.min(e.value - base.value + slack);
            lines.push(format!("{:.4}", e.value - base.value));
        }
    }
    verdict(
        worst >= 0.0,
        format!("chi_p - chi at beta 1 and 20: {}", lines.join(" ")),
    )
}

fn tail_dichotomy() -> Verdict {
    let bounded_cfg = TailConfig::load(
        None,
        &[
            "system.kind=\"matrices\"".into(),
            "system.a0=[[-1.0, 0.0], [0.0, -1.0]]".into(),
            "system.a1=[[-1.0, 0.0], [0.0, -1.0]]".into(),
            "system.b0=[0.5, 0.5]".into(),
            "system.b1=[1.0, 0.0]".into(),
            "system.rates=[0.5, 0.5]".into(),
            "search.k_phases=[1]".into(),
        ],
    )
    .unwrap();
    let bounded = tail_report(&bounded_cfg, 0).unwrap();
    let increase = bounded
        .bounded
        .as_ref()
        .map_or(f64::INFINITY, |r| r.second_half_increase);
    let bounded_ok = bounded.verdict == "bounded" && increase < 1e-6;

    let heavy = tail_report(&TailConfig::load(None, &[]).unwrap(), 0).unwrap();
    let chi_negative = heavy.chi_quadrature.is_some_and(|c| c < 0.0);
    let search = heavy.searches.last().expect("at least one search");
    let cmp = heavy.heavy.as_ref().and_then(|h| h.comparison.clone());
    let agree = cmp.as_ref().is_some_and(|c| c.overlap && c.ratio <= 1.25);

    let mut rng = stream_rng(21, 0);
    let pareto_ok = [1.5, 3.0].iter().all(|&alpha| {
        let s: Vec<f64> = (0..100_000)
            .map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / alpha))
            .collect();
        let e = hill_tail_index(&s, default_hill_k(s.len())).unwrap();
        e.ci_low <= alpha && alpha <= e.ci_high
    });
    let lognormal_ok = [(-0.5f64, 1.0f64), (-0.2, 0.5), (-1.0, 2.0)]
        .iter()
        .all(|&(mu, sigma)| {
            let d = Normal::new(mu, sigma).unwrap();
            let s: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng).exp()).collect();
            let e = moment_root_x1(&s, 30.0, 1e-12).unwrap();
            let exact = -2.0 * mu / (sigma * sigma);
            e.ci_low <= exact && exact <= e.ci_high
        });

    let attainable =
        bounded_ok && chi_negative && search.certified && agree && pareto_ok && lognormal_ok;
    ATTAINABLE_PARTS_OK.store(attainable, std::sync::atomic::Ordering::Relaxed);
    let detail = format!(
        "bounded increase {increase:.1e}; heavy: chi {:.4}, per-direction certified {} (gain {:.3}), \
         sigma_min {:.3} > 1 {}, {}; Pareto {pareto_ok}, log-normal {lognormal_ok}",
        heavy.chi_quadrature.unwrap_or(f64::NAN),
        search.certified,
        search.direction_gain,
        search.sigma_min,
        search.uniform_certified,
        cmp.map_or("no comparison".into(), |c| format!(
            "m = {} root vs Hill ratio {:.3}, overlap {}",
            c.blocks, c.ratio, c.overlap
        )),
    );
    verdict(attainable && search.uniform_certified, detail)
}

static ATTAINABLE_PARTS_OK: std::sync::atomic::AtomicBool =
    std::sync::atomic::AtomicBool::new(false);

fn run_twice(dir: &Path, tag: &str, args: &[&str]) -> bool {
    let mut outputs = Vec::new();
    for rep in 0..2 {
        let out = dir.join(format!("{tag}-{rep}"));
        let status = Command::new(env!("CARGO_BIN_EXE_switchlab"))
            .args(args)
            .arg("--out")
            .arg(&out)
            .output()
            .expect("binary runs")
            .status;
        if !status.success() {
            return false;
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    !outputs[0].is_empty() && outputs[0] == outputs[1]
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, Vec<&str>); 5] = [
        (
            "profile",
            vec![
                "chi-profile",
                "--svg",
                "--seed",
                "3",
                "--set",
                "profile.mc_overlay=4",
                "--set",
                "mc.horizon=100",
            ],
        ),
        (
            "sign",
            vec![
                "sign-region",
                "--svg",
                "--set",
                "grid.beta_points=16",
                "--set",
                "grid.u_points=16",
            ],
        ),
        ("det", vec!["chi-det", "--svg", "--format", "json"]),
        (
            "erlang",
            vec![
                "chi-erlang",
                "--svg",
                "--seed",
                "2",
                "--set",
                "grid.points=8",
                "--set",
                "erlang.horizon=200",
            ],
        ),
        (
            "simulate",
            vec!["simulate", "--svg", "--seed", "4", "--horizon", "30"],
        ),
    ];
    let failed: Vec<&str> = cases
        .iter()
        .filter(|(tag, args)| !run_twice(dir.path(), tag, args))
        .map(|(tag, _)| *tag)
        .collect();
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            "byte-identical reruns for 5 commands".into()
        } else {
            format!("differing or failing: {failed:?}")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("limit behavior", limits),
        ("blow-up bump", bump),
        ("quadrature against Monte Carlo", quadrature_vs_mc),
        ("measure validity", measure_validity),
        ("deterministic exponent", deterministic_exponent),
        ("sign region", sign_region_criterion),
        ("Erlang double bump", erlang_double_bump),
        ("pathwise convergence", pathwise_convergence),
        ("generating function", generating_function),
        ("Jensen", jensen),
        ("tail dichotomy", tail_dichotomy),
        ("CLI determinism", cli_determinism),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        let start = Instant::now();
        let v = check();
        println!(
            "{} {id:>2} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if v.pass == UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    if !ATTAINABLE_PARTS_OK.load(std::sync::atomic::Ordering::Relaxed) {
        unexpected.push(11);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
    println!(
        "acceptance: {} of 12 pass; criterion 11 fails as expected (sigma_min > 1 is unattainable)",
        12 - UNATTAINABLE.len()
    );
}
