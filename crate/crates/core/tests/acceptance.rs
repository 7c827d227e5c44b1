//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the report is always printed. The
//! process fails if a criterion fails that is not listed in
//! [`KNOWN_FAILURES`]; those are reported as FAIL but do not abort the run.

use std::time::Instant;

use frame_denoise::aggregation::{
    delta_dd, delta_di, per_basis_estimates, reconstruct_weighted, BlockEstimate, ExpWeightConfig,
    WeightVector,
};
use frame_denoise::bases::{ortho_collection, BasisCollection};
use frame_denoise::bench::{
    cosine_haar, csv_string, run_table, run_table1, run_table2, run_table3, Estimator, ExperimentConfig,
    ResultRow, Table,
};
use frame_denoise::diag_shrink::{
    empirical_gain_raw, empirical_gain_with, empirical_wiener_raw, empirical_wiener_ridge, oracle_risk,
    sure_linear, GainMode, DEFAULT_RIDGE,
};
use frame_denoise::frame::DEFAULT_TIGHT_TOLERANCE;
use frame_denoise::signals::{make_signal, standard_normal, SignalName};
use frame_denoise::sure_rules::{greedy_hard, sure_soft, universal_threshold, ShrinkRule, UniversalMode};
use frame_denoise::testkit::{
    gaussian_vector, random_frame, random_orthogonal, random_tight_frame, uniform_vector,
};
use frame_denoise::{build_frame, FrameOperator};
use nalgebra::{DMatrix, DVector};

/// Criteria that fail for documented reasons (see README).
const KNOWN_FAILURES: &[u32] = &[9];

/// Table 1, `(signal, snr, [IDEAL_U, IDEAL_I, EMP_U, EMP_I])`.
const TABLE1: &[(&str, f64, [f64; 4])] = &[
    ("WernerSorrows", 1.0, [0.1327, 0.2274, 0.4964, 5.7420]),
    ("WernerSorrows", 3.0, [0.0284, 0.0404, 0.0777, 0.1343]),
    ("WernerSorrows", 5.0, [0.0126, 0.0167, 0.0321, 0.0412]),
    ("MishMash", 1.0, [0.1026, 0.1837, 0.4881, 6.2411]),
    ("MishMash", 3.0, [0.0211, 0.0284, 0.0752, 0.1113]),
    ("MishMash", 5.0, [0.0094, 0.0122, 0.0324, 0.0286]),
];
const TABLE1_ESTIMATORS: [Estimator; 4] =
    [Estimator::IdealU, Estimator::IdealI, Estimator::EmpU, Estimator::EmpI];

/// Table 2, `(signal, snr, [SOFT_U, SOFT_I, VISU_U, VISU_I])`.
const TABLE2: &[(&str, f64, [f64; 4])] = &[
    ("WernerSorrows", 1.0, [0.3748, 0.8511, 0.8987, 0.9024]),
    ("WernerSorrows", 3.0, [0.0763, 0.1342, 0.3748, 0.3965]),
    ("WernerSorrows", 5.0, [0.0327, 0.0481, 0.1230, 0.1275]),
    ("MishMash", 1.0, [0.3519, 0.8970, 0.9733, 0.9756]),
    ("MishMash", 3.0, [0.0602, 0.1063, 0.2434, 0.2573]),
    ("MishMash", 5.0, [0.0251, 0.0414, 0.0749, 0.0786]),
];

/// Table 3, `(signal, snr, [COSINE, HAAR, AVERAGE, AGG_DI], cosine weight)`.
const TABLE3: &[(&str, f64, [f64; 4], f64)] = &[
    ("Window", 1.0, [0.2291, 0.1719, 0.1719, 0.1648], 0.2200),
    ("Window", 3.0, [0.0742, 0.0214, 0.0364, 0.0214], 0.0105),
    ("Window", 5.0, [0.0444, 0.0076, 0.0182, 0.0077], 0.0045),
    ("LoSine", 1.0, [0.1284, 0.9940, 0.4118, 0.1284], 1.0000),
    ("LoSine", 3.0, [0.0427, 0.6682, 0.2221, 0.0444], 0.9836),
    ("LoSine", 5.0, [0.0259, 0.3617, 0.1177, 0.0305], 0.9181),
    ("Window+LoSine", 1.0, [0.2644, 0.3496, 0.2673, 0.2563], 0.7693),
    ("Window+LoSine", 3.0, [0.0855, 0.2011, 0.1037, 0.0827], 0.8650),
    ("Window+LoSine", 5.0, [0.0509, 0.1666, 0.0720, 0.0496], 0.8448),
];

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    summary: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome { pass, summary: summary.into(), notes: Vec::new() }
    }
}

/// Runtime budget check appended to the summary.
fn within_budget(start: Instant, budget_s: f64, out: &mut Outcome) {
    let s = start.elapsed().as_secs_f64();
    out.summary.push_str(&format!("; {s:.2} s (budget {budget_s} s)"));
    out.pass &= s < budget_s;
}

/// Sample mean and standard error.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `W⁺` from nalgebra's SVD pseudo-inverse, independent of the frame code.
fn reference_pinv(w: &DMatrix<f64>) -> DMatrix<f64> {
    w.clone().pseudo_inverse(1e-12).expect("pseudo-inverse")
}

fn identity_frame(n: usize) -> FrameOperator {
    build_frame(DMatrix::identity(n, n), DEFAULT_TIGHT_TOLERANCE).unwrap()
}

fn row<'a>(rows: &'a [ResultRow], signal: &str, snr: f64, e: Estimator) -> &'a ResultRow {
    rows.iter()
        .find(|r| r.signal == signal && r.snr == snr && r.estimator == e)
        .unwrap_or_else(|| panic!("missing row {signal} {snr} {e}"))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let sizes = [(8, 4), (16, 8), (24, 12), (40, 16), (64, 32), (96, 48), (128, 64)];
    let mut worst = 0.0f64;
    let mut worst_ref = 0.0f64;
    for k in 0..50u64 {
        let (big_n, n) = sizes[k as usize % sizes.len()];
        let frame = random_frame(big_n, n, 1000 + k).unwrap();
        worst = worst.max((frame.trace_u_uminus() - n as f64).abs());
        let w = frame.w();
        let p = reference_pinv(w);
        let reference = (w * w.transpose() * p.transpose() * &p).trace();
        worst_ref = worst_ref.max((reference - n as f64).abs());
    }
    let mut out = Outcome::new(
        worst < 1e-8 && worst_ref < 1e-8,
        format!(
            "50 frames (8,4)..(128,64), max |Tr[UU⁻] − n| = {worst:.2e} (reference pinv {worst_ref:.2e})"
        ),
    );
    within_budget(start, 5.0, &mut out);
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let draws = 100_000u64;
    let sizes = [(8, 4), (12, 6), (16, 8)];
    let mut pass = true;
    let mut worst_z = 0.0f64;
    let mut notes = Vec::new();
    for k in 0..10u64 {
        let (big_n, n) = sizes[k as usize % sizes.len()];
        let alpha = 1.0 + 0.5 * k as f64;
        let frame = random_tight_frame(big_n, n, alpha, 2000 + k).unwrap();
        let f = gaussian_vector(n, 2100 + k);
        let gamma = uniform_vector(big_n, 2200 + k);
        let sigma = 0.3 + 0.1 * k as f64;
        let theta = frame.w() * &f;
        let oracle = oracle_risk(&frame, &gamma, &theta, sigma).unwrap().risk;
        let p = reference_pinv(frame.w());
        let shrink = &p * DMatrix::from_diagonal(&gamma) * frame.w();
        let losses: Vec<f64> = (0..draws)
            .map(|d| {
                let x = &f + standard_normal(n, 2300 + k, d) * sigma;
                (&shrink * x - &f).norm_squared()
            })
            .collect();
        let (mean, se) = mean_se(&losses);
        let z = (mean - oracle) / se;
        worst_z = worst_z.max(z.abs());
        pass &= z.abs() <= 3.0;
        notes.push(format!(
            "frame {k} ({big_n},{n}) alpha={alpha}: oracle {oracle:.6}, MC {mean:.6} ± {se:.6} (z = {z:+.2})"
        ));
    }
    let mut out = Outcome::new(pass, format!("10 tight frames, 10^5 draws each, max |z| = {worst_z:.2}"));
    out.notes = notes;
    within_budget(start, 60.0, &mut out);
    out
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let draws = 20_000u64;
    let (big_n, n) = (16, 8);
    let sigma = 0.5;
    let mut pass = true;
    let mut notes = Vec::new();
    let frames = [
        ("tight", random_tight_frame(big_n, n, 2.0, 3000).unwrap()),
        ("generic", random_frame(big_n, n, 3001).unwrap()),
    ];
    for (kind, frame) in &frames {
        let f = gaussian_vector(n, 3002);
        let p = reference_pinv(frame.w());
        let gamma = uniform_vector(big_n, 3003);
        let t = DVector::from_element(big_n, 0.6);
        for rule in ["linear", "soft"] {
            let mut sure = Vec::with_capacity(draws as usize);
            let mut loss = Vec::with_capacity(draws as usize);
            for d in 0..draws {
                let x = &f + standard_normal(n, 3004, d) * sigma;
                let y = frame.w() * x;
                let (theta_hat, risk) = if rule == "linear" {
                    (y.component_mul(&gamma), sure_linear(frame, &y, sigma, &gamma).unwrap().risk)
                } else {
                    let soft = y.zip_map(&t, |v, ti| v.signum() * (v.abs() - ti).max(0.0));
                    (soft, sure_soft(frame, &y, sigma, &t).unwrap().risk)
                };
                sure.push(risk);
                loss.push((&p * theta_hat - &f).norm_squared());
            }
            let (ms, ses) = mean_se(&sure);
            let (ml, sel) = mean_se(&loss);
            let se = (ses * ses + sel * sel).sqrt();
            let z = (ms - ml) / se;
            pass &= z.abs() <= 3.0;
            notes.push(format!("{kind} frame, {rule} rule: mean SURE {ms:.6}, MC risk {ml:.6}, z = {z:+.2}"));
        }
    }
    let mut out =
        Outcome::new(pass, "(N,n) = (16,8), 2·10^4 draws, linear and soft rules on tight and generic frames");
    out.notes = notes;
    within_budget(start, 60.0, &mut out);
    out
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut exact = true;
    for k in 0..20u64 {
        let n = 16 + 8 * k as usize;
        let frame = identity_frame(n);
        let sigma = 0.2 + 0.05 * k as f64;
        let y = gaussian_vector(n, 4000 + k);
        let t = 0.1 * k as f64;
        let classical: f64 = sigma * sigma * n as f64
            + y.iter()
                .map(|v| v.abs().min(t).powi(2) - if v.abs() < t { 2.0 * sigma * sigma } else { 0.0 })
                .sum::<f64>();
        let risk = sure_soft(&frame, &y, sigma, &DVector::from_element(n, t)).unwrap().risk;
        worst = worst.max((risk - classical).abs() / classical.abs().max(1.0));

        for mode in [GainMode::Clip, GainMode::Box] {
            let emp_u = empirical_gain_with(&frame, &y, sigma, DEFAULT_RIDGE, mode).unwrap();
            exact &= emp_u.gamma == empirical_wiener_ridge(&y, sigma, DEFAULT_RIDGE).gamma;
        }
        let raw_u = empirical_gain_raw(&frame, &y, sigma, DEFAULT_RIDGE).unwrap();
        exact &= raw_u == empirical_wiener_raw(&y, sigma, DEFAULT_RIDGE);
    }
    Outcome::new(
        worst <= 1e-10 && exact,
        format!(
            "identity frames: max relative |SURE_soft − classical| = {worst:.2e}; EMP_U == EMP_I bitwise: {exact}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (big_n, n) = (6, 3);
    let mut bracket = true;
    let mut monotone = true;
    let mut start_matches = true;
    let mut hits = 0;
    for k in 0..100u64 {
        let frame = random_frame(big_n, n, 5000 + k).unwrap();
        let y = gaussian_vector(big_n, 5100 + k) * 1.5;
        let sigma = 0.4 + 0.01 * k as f64;
        let um = frame.u_minus();
        let pdiag = (frame.u_minus() * frame.u()).diagonal();
        let h = DMatrix::from_fn(big_n, big_n, |i, j| {
            y[i] * y[j] * um[(i, j)] - if i == j { 2.0 * sigma * sigma * pdiag[i] } else { 0.0 }
        });
        let delta_of = |mask: usize| -> f64 {
            let mut s = 0.0;
            for i in 0..big_n {
                for j in 0..big_n {
                    if mask >> i & 1 == 1 && mask >> j & 1 == 1 {
                        s += h[(i, j)];
                    }
                }
            }
            s
        };
        let full = delta_of((1 << big_n) - 1);
        let best = (0..1usize << big_n).map(delta_of).fold(f64::INFINITY, f64::min);
        let (_, report, state) = greedy_hard(&frame, &y, sigma).unwrap();
        let tol = 1e-10 * full.abs().max(1.0);
        bracket &= report.delta >= best - tol && report.delta <= full + tol;
        start_matches &= (state.deltas[0] - full).abs() <= tol;
        monotone &= state.deltas.windows(2).all(|w| w[1] < w[0]);
        if (report.delta - best).abs() <= tol {
            hits += 1;
        }
    }
    let mut out = Outcome::new(
        bracket && monotone && start_matches,
        format!(
            "100 instances (6,3): bracketed {bracket}, strictly decreasing {monotone}, \
             initial Δ matches dense H {start_matches}; greedy optimal in {hits}/100"
        ),
    );
    within_budget(start, 10.0, &mut out);
    out
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let n = 64;
    let b = cosine_haar(n, 3).unwrap();
    let f = make_signal(SignalName::WindowPlusLoSine, n).unwrap();
    let sigma = 1.0 / 3.0;
    let t = universal_threshold(sigma, n, UniversalMode::Orthonormal).unwrap();
    let rules = vec![ShrinkRule::soft_uniform(t, n); 2];
    let mut identity_gap = 0.0f64;
    let mut notes = Vec::new();
    let mut pass = true;
    for lambda in [[0.5, 0.5], [0.3, 0.7], [0.9, 0.1]] {
        let w = WeightVector::fixed(DVector::from_row_slice(&lambda));
        let mut agg = Vec::new();
        let mut weighted = Vec::new();
        for d in 0..5000u64 {
            let x = &f + standard_normal(n, 6000, d) * sigma;
            let est = BlockEstimate::from_rules(b.analyze(&x).unwrap(), &rules).unwrap();
            let f_hat = reconstruct_weighted(&b, &est, &w).unwrap();
            let parts = per_basis_estimates(&b, &est).unwrap();
            let lhs = (&f_hat - &f).norm_squared();
            let rhs: f64 = parts
                .iter()
                .zip(lambda)
                .map(|(fi, l)| l * ((fi - &f).norm_squared() - (fi - &f_hat).norm_squared()))
                .sum();
            identity_gap = identity_gap.max((lhs - rhs).abs());
            agg.push(lhs);
            weighted.push(parts.iter().zip(lambda).map(|(fi, l)| l * (fi - &f).norm_squared()).sum());
        }
        let diff: Vec<f64> = weighted.iter().zip(&agg).map(|(a, b)| a - b).collect();
        let (md, sed) = mean_se(&diff);
        let (ma, _) = mean_se(&agg);
        let (mw, _) = mean_se(&weighted);
        pass &= md >= -3.0 * sed;
        notes.push(format!(
            "lambda = {lambda:?}: E‖f̂−f‖² = {ma:.5} vs Σλᵢ E‖f̂⁽ⁱ⁾−f‖² = {mw:.5} (gap {md:.5} ± {sed:.5})"
        ));
    }
    let mut out = Outcome::new(
        pass && identity_gap <= 1e-9,
        format!("m = 2, n = 64, 5000 draws: max per-draw identity error {identity_gap:.2e}"),
    );
    out.notes = notes;
    within_budget(start, 30.0, &mut out);
    out
}

fn random_collection(n: usize, seed: u64) -> BasisCollection {
    ortho_collection(vec![random_orthogonal(n, seed), random_orthogonal(n, seed + 1)]).unwrap()
}

fn criterion_7() -> Outcome {
    let mut worst = 0.0f64;
    let mut exact = true;
    for k in 0..20u64 {
        let n = 6 + k as usize % 5;
        let b = random_collection(n, 7000 + 2 * k);
        let sigma = 0.3 + 0.05 * k as f64;
        let x = gaussian_vector(n, 7100 + k);
        let rules = [ShrinkRule::soft_uniform(0.4, n), ShrinkRule::soft_uniform(0.9, n)];
        let est = BlockEstimate::from_rules(b.analyze(&x).unwrap(), &rules).unwrap();
        let cfg = ExpWeightConfig::default_for(2, sigma);
        let dd = delta_dd(&b, &est, &cfg, sigma).unwrap();
        worst = worst.max((dd.delta0 - dd.delta0_explicit).abs() / dd.delta0.abs().max(1.0));

        let pi = DVector::from_vec(vec![1.0 + k as f64, 2.0]);
        let zero = ExpWeightConfig { pi: pi.clone(), beta: 0.0, ..cfg };
        let dd0 = delta_dd(&b, &est, &zero, sigma).unwrap();
        let di = delta_di(&b, &est, &WeightVector::fixed(&pi / pi.sum()), sigma).unwrap();
        exact &= dd0.report.delta == di.delta && dd0.report.risk == di.risk;
    }
    Outcome::new(
        worst <= 1e-9 && exact,
        format!("20 instances m = 2: max |Δ₀ form 1 − form 2| = {worst:.2e}; β = 0 equals fixed weights exactly: {exact}"),
    )
}

fn fd_gradient(rule: &ShrinkRule, y: &DVector<f64>, sigma: f64, h: f64) -> DVector<f64> {
    let r = |v: DVector<f64>| {
        BlockEstimate::from_rules(vec![v], std::slice::from_ref(rule)).unwrap().sure(0, sigma)
    };
    DVector::from_fn(y.len(), |k, _| {
        let mut up = y.clone();
        let mut down = y.clone();
        up[k] += h;
        down[k] -= h;
        (r(up) - r(down)) / (2.0 * h)
    })
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let n = 32;
        let sigma = 0.5;
        let y = gaussian_vector(n, 8000 + k) * 2.0;
        let t = 0.8;
        let y_soft = y.map(|v| if (v.abs() - t).abs() < 1e-3 { v + 0.01 * v.signum() } else { v });
        for (rule, y) in [
            (ShrinkRule::LinearGain(uniform_vector(n, 8100 + k)), &y),
            (ShrinkRule::soft_uniform(t, n), &y_soft),
        ] {
            let est = BlockEstimate::from_rules(vec![y.clone()], std::slice::from_ref(&rule)).unwrap();
            let analytic = est.sure_gradient(0, sigma, None).unwrap();
            let fd = fd_gradient(&rule, y, sigma, h);
            worst = worst.max((&analytic - &fd).norm() / fd.norm().max(1e-300));
        }
    }
    let mut out = Outcome::new(
        worst < 1e-5,
        format!("linear and soft rules, 20 points each, step 1e-5: max relative error {worst:.2e}"),
    );
    within_budget(start, 5.0, &mut out);
    out
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::table1();
    let rows = run_table1(&cfg).unwrap();
    let mut notes = Vec::new();
    let mut orderings = true;
    let mut ratio_ok = true;
    let mut means_ok = true;
    let mut misses = 0;
    for &(signal, snr, published) in TABLE1 {
        let got: Vec<f64> =
            TABLE1_ESTIMATORS.iter().map(|&e| row(&rows, signal, snr, e).mean_error).collect();
        let mut cells = Vec::new();
        for ((e, g), p) in TABLE1_ESTIMATORS.iter().zip(&got).zip(published) {
            let dev = g / p - 1.0;
            let ok = dev.abs() <= 0.2;
            if !ok {
                misses += 1;
            }
            means_ok &= ok;
            cells.push(format!("{e} {g:.4} ({p}, {:+.0}%{})", 100.0 * dev, if ok { "" } else { " !" }));
        }
        notes.push(format!("{signal} SNR={snr}: {}", cells.join(", ")));
        orderings &= got[0] < got[1];
        if snr == 1.0 || snr == 3.0 {
            orderings &= got[2] < got[3];
        }
        if snr == 1.0 {
            let ratio = got[3] / got[2];
            ratio_ok &= ratio > 5.0;
            notes.push(format!("{signal} SNR=1: EMP_I/EMP_U = {ratio:.2}"));
        }
    }

    let diag = |ridge: f64, clip: bool| {
        let cfg = ExperimentConfig {
            estimators: vec![Estimator::EmpI],
            ridge,
            clip_emp_i: clip,
            ..ExperimentConfig::table1()
        };
        let rows = run_table1(&cfg).unwrap();
        rows.iter()
            .map(|r| format!("{} SNR={}: {:.4}", r.signal, r.snr, r.mean_error))
            .collect::<Vec<_>>()
            .join(", ")
    };
    notes.push(format!("diagnostic EMP_I with ridge 1e-2: {}", diag(1e-2, false)));
    notes.push(format!("diagnostic EMP_I clipped to [0,1]: {}", diag(DEFAULT_RIDGE, true)));
    notes.push("sp2-5k and Glock recordings are not available; only the synthetic signals are run".into());

    Outcome {
        pass: orderings && ratio_ok && means_ok,
        summary: format!(
            "n = 1280, 100 runs: orderings {orderings}, EMP_I/EMP_U > 5 at SNR 1 {ratio_ok}, \
             means within ±20%: {} of 24 ({misses} outside); {:.1} s",
            24 - misses,
            start.elapsed().as_secs_f64()
        ),
        notes,
    }
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::table2();
    let rows = run_table2(&cfg).unwrap();
    let order = [Estimator::SoftU, Estimator::SoftI, Estimator::VisuU, Estimator::VisuI];
    let mut notes = Vec::new();
    let mut orderings = true;
    for &(signal, snr, published) in TABLE2 {
        let got: Vec<f64> = order.iter().map(|&e| row(&rows, signal, snr, e).mean_error).collect();
        orderings &= got[0] < got[1] && got[1] < got[2] && got[2] <= got[3];
        let cells: Vec<String> =
            order.iter().zip(&got).zip(published).map(|((e, g), p)| format!("{e} {g:.4} ({p})")).collect();
        notes.push(format!("{signal} SNR={snr}: {}", cells.join(", ")));
    }
    let soft = row(&rows, "WernerSorrows", 3.0, Estimator::SoftU).mean_error;
    let dev = soft / 0.0763 - 1.0;
    Outcome {
        pass: orderings && dev.abs() <= 0.2,
        summary: format!(
            "n = 1280, 100 runs: SOFT_U < SOFT_I < VISU_U <= VISU_I everywhere {orderings}; \
             WernerSorrows SNR=3 SOFT_U {soft:.4} vs 0.0763 ({:+.1}%); {:.1} s",
            100.0 * dev,
            start.elapsed().as_secs_f64()
        ),
        notes,
    }
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::table3();
    let rows = run_table3(&cfg).unwrap();
    let mut notes = Vec::new();
    let mut risk_ok = true;
    let mut weights_ok = true;
    for &(signal, snr, published, published_cos) in TABLE3 {
        let agg = row(&rows, signal, snr, Estimator::AggDi);
        let cos = row(&rows, signal, snr, Estimator::Cosine);
        let haar = row(&rows, signal, snr, Estimator::Haar);
        let avg = row(&rows, signal, snr, Estimator::Average);
        let best = if cos.mean_error <= haar.mean_error { cos } else { haar };
        let ok = agg.mean_error <= best.mean_error + 2.0 * best.standard_error();
        risk_ok &= ok;
        let w = agg.weights.as_ref().expect("aggregation weights");
        let w_ok = match signal {
            "Window" => w[1] >= 0.9,
            "LoSine" => w[0] >= 0.9,
            _ => (0.6..=0.95).contains(&w[0]),
        };
        weights_ok &= w_ok;
        notes.push(format!(
            "{signal} SNR={snr}: COSINE {:.4} HAAR {:.4} AVERAGE {:.4} AGG_DI {:.4} ({}) weights ({:.4}, {:.4}) ({published_cos:.4}){}{}",
            cos.mean_error,
            haar.mean_error,
            avg.mean_error,
            agg.mean_error,
            published.iter().map(|p| format!("{p}")).collect::<Vec<_>>().join("/"),
            w[0],
            w[1],
            if ok { "" } else { " risk!" },
            if w_ok { "" } else { " weights!" },
        ));
    }
    Outcome {
        pass: risk_ok && weights_ok,
        summary: format!(
            "n = 1024, Cosine + Haar, 100 runs: AGG_DI <= best basis + 2se {risk_ok}; weight directions {weights_ok}; {:.1} s",
            start.elapsed().as_secs_f64()
        ),
        notes,
    }
}

fn criterion_12() -> Outcome {
    let mut identical = true;
    let mut notes = Vec::new();
    for table in [Table::Shrinkage, Table::Thresholding, Table::Aggregation] {
        let mut cfg = ExperimentConfig::for_table(table);
        cfg.runs = 4;
        cfg.estimators = match table {
            Table::Shrinkage => TABLE1_ESTIMATORS.to_vec(),
            Table::Thresholding => vec![
                Estimator::SoftU,
                Estimator::SoftI,
                Estimator::VisuU,
                Estimator::VisuI,
                Estimator::GreedyHard,
            ],
            Table::Aggregation => vec![
                Estimator::Cosine,
                Estimator::Haar,
                Estimator::Average,
                Estimator::AggDi,
                Estimator::AggExp,
            ],
        };
        let a = csv_string(&run_table(&cfg).unwrap()).unwrap();
        let b = csv_string(&run_table(&cfg).unwrap()).unwrap();
        cfg.parallel = false;
        let c = csv_string(&run_table(&cfg).unwrap()).unwrap();
        let same = a == b && a == c;
        identical &= same;
        notes.push(format!("{table:?}: {} bytes, repeat and serial identical {same}", a.len()));
    }
    let mut out =
        Outcome::new(identical, "all three tables, repeated and serial runs compared byte for byte");
    out.notes = notes;
    out
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "trace identity", criterion_1),
        (2, "oracle risk formula", criterion_2),
        (3, "SURE unbiasedness", criterion_3),
        (4, "orthonormal collapse", criterion_4),
        (5, "greedy vs exhaustive", criterion_5),
        (6, "per-draw aggregation identity", criterion_6),
        (7, "dual correction forms", criterion_7),
        (8, "SURE gradient", criterion_8),
        (9, "Table 1 reproduction", criterion_9),
        (10, "Table 2 reproduction", criterion_10),
        (11, "Table 3 reproduction", criterion_11),
        (12, "determinism", criterion_12),
    ];
    let only: Option<Vec<u32>> =
        std::env::args().skip(1).filter(|a| !a.starts_with('-')).map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, title, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.is_empty() && !o.contains(&id)) {
            continue;
        }
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag}  {title}: {}", out.summary);
        for note in &out.notes {
            println!("    {note}");
        }
        if !out.pass && !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
        if out.pass && KNOWN_FAILURES.contains(&id) {
            println!("    (listed as a known failure but passed)");
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {unexpected:?}");
        std::process::exit(1);
    }
}
