//! The fitted recursion checked against a direct, loop-by-loop evaluation of
//! its definitions.

use datastop::domain::{GainSpec, PayoffKind, PayoffSpec};
use datastop::estimator::{fit_stopper, EstimatorConfig, ExpertGrid, ReturnConvention};
use datastop::kernel::KernelProfile;
use datastop::simulate::{garch_paths, GarchParams};

struct Naive {
    /// `[stage][t-1]`
    targets: Vec<Vec<f64>>,
    /// `[stage][expert][t-1]`
    predictions: Vec<Vec<Vec<f64>>>,
    /// `[stage][t-1][expert]`
    weights: Vec<Vec<Vec<f64>>>,
    aggregated: Vec<Vec<f64>>,
}

fn coordinates(z: &[f64], t: usize, k: usize, j: usize, anchored: bool) -> Vec<f64> {
    // prices X_0 = 1, X_i = X_{i-1} z_i (1-based returns)
    let mut x = vec![1.0];
    for r in z {
        x.push(x.last().unwrap() * r);
    }
    let mut out = Vec::new();
    for s in (0..=k).rev() {
        out.push(if anchored { x[t - 1 - s] / x[t] } else { z[t - s - 1] });
    }
    for u in 1..=j {
        out.push(if anchored { x[t + u] / x[t] } else { z[t + u - 1] });
    }
    out
}

fn gaussian(v: &[f64], h: f64) -> f64 {
    let norm = v.iter().map(|d| (d / h) * (d / h)).sum::<f64>().sqrt();
    let t = norm.powi(v.len() as i32);
    (-t * t).exp()
}

fn naive_fit(z: &[f64], gains: &GainSpec, grid: &ExpertGrid, c: f64, anchored: bool) -> Naive {
    let n = z.len();
    let l = gains.horizon();
    let b = gains.bound();
    let mut out = Naive {
        targets: vec![Vec::new(); l],
        predictions: vec![Vec::new(); l],
        weights: vec![Vec::new(); l],
        aggregated: vec![Vec::new(); l],
    };
    for j in (0..l).rev() {
        let targets: Vec<f64> = (1..n - j)
            .map(|t| {
                let g = gains.eval(j + 1, &z[t..t + j + 1]).unwrap();
                let next = if j + 1 == l { 0.0 } else { out.aggregated[j + 1][t - 1] };
                g.max(next)
            })
            .collect();
        let mut preds = Vec::new();
        for e in grid.experts() {
            let k = e.lags;
            let p: Vec<f64> = (1..=n - j)
                .map(|t| {
                    if t < k + 1 {
                        return 0.0;
                    }
                    let q = coordinates(z, t, k, j, anchored);
                    let (mut num, mut den) = (0.0, 0.0);
                    let mut i = k + 1;
                    while i + j < t {
                        let w_i = coordinates(z, i, k, j, anchored);
                        let d: Vec<f64> = q.iter().zip(&w_i).map(|(a, b)| a - b).collect();
                        let w = gaussian(&d, e.bandwidth);
                        num += w * targets[i - 1];
                        den += w;
                        i += 1;
                    }
                    if den > 0.0 {
                        (num / den).clamp(0.0, b)
                    } else {
                        0.0
                    }
                })
                .collect();
            preds.push(p);
        }
        let mut weights = Vec::new();
        for t in 1..=n {
            let raw: Vec<f64> = preds
                .iter()
                .zip(grid.prior())
                .map(|(p, prior)| {
                    let s: f64 = (1..t.min(n - j)).map(|i| (p[i - 1] - targets[i - 1]).powi(2)).sum();
                    prior * (-s / c).exp()
                })
                .collect();
            let total: f64 = raw.iter().sum();
            weights.push(raw.iter().map(|w| w / total).collect::<Vec<_>>());
        }
        let agg: Vec<f64> = (1..=n - j)
            .map(|t| {
                preds
                    .iter()
                    .zip(&weights[t - 1])
                    .map(|(p, w)| w * p[t - 1])
                    .sum::<f64>()
                    .clamp(0.0, b)
            })
            .collect();
        out.targets[j] = targets;
        out.predictions[j] = preds;
        out.weights[j] = weights;
        out.aggregated[j] = agg;
    }
    out
}

fn assert_all_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: lengths");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}[{i}]: {x} vs {y}");
    }
}

fn check_against_naive(anchored: bool) {
    let sim = garch_paths(&GarchParams::default(), 50, 1, 0, 17).unwrap();
    let gains = GainSpec::option(PayoffSpec::default(), 3).unwrap();
    let grid = ExpertGrid::uniform(&[0, 1, 2], &[0.05, 0.2, 1.0]).unwrap();
    let convention = if anchored {
        ReturnConvention::IntervalAnchored
    } else {
        ReturnConvention::StepRelative
    };
    let config = EstimatorConfig {
        grid: grid.clone(),
        temperature: Some(2.0),
        convention,
        ..Default::default()
    };
    let fitted = fit_stopper(&sim.past, gains.clone(), config).unwrap();
    let naive = naive_fit(&sim.past, &gains, &grid, 2.0, anchored);
    for j in 0..3 {
        assert_all_close(fitted.stage_targets(j).unwrap(), &naive.targets[j], 1e-9, "targets");
        for e in 0..grid.len() {
            assert_all_close(
                fitted.online_predictions(j, e).unwrap(),
                &naive.predictions[j][e],
                1e-9,
                "predictions",
            );
        }
        for t in 1..=50 {
            assert_all_close(
                fitted.mixture_weights(j, t).unwrap(),
                &naive.weights[j][t - 1],
                1e-9,
                "weights",
            );
        }
        assert_all_close(
            fitted.aggregated_online(j).unwrap(),
            &naive.aggregated[j],
            1e-9,
            "aggregated",
        );
    }
}

#[test]
fn recursion_matches_direct_evaluation_anchored() {
    check_against_naive(true);
}

#[test]
fn recursion_matches_direct_evaluation_step_relative() {
    check_against_naive(false);
}

#[test]
fn two_window_prediction_by_hand() {
    // g_2 = 4 after an up-move, 2 otherwise; targets Y_1[1] = 2, Y_1[2] = 4
    let gains = GainSpec::custom(2, 4.0, |p: &[f64]| match p.len() {
        2 => {
            if p[0] > 1.0 {
                4.0
            } else {
                2.0
            }
        }
        _ => 0.0,
    })
    .unwrap();
    let grid = ExpertGrid::uniform(&[0], &[0.1]).unwrap();
    let config = EstimatorConfig {
        grid,
        convention: ReturnConvention::StepRelative,
        kernel: KernelProfile::Gaussian,
        ..Default::default()
    };
    let train = [1.0, 0.9, 1.1, 1.0];
    let fitted = fit_stopper(&train, gains, config).unwrap();
    assert_eq!(fitted.stage_targets(1).unwrap(), &[2.0, 4.0]);
    // query (1.0, 1.0) against windows (1.0, 0.9) and (0.9, 1.1): squared
    // scaled distances 1 and 2, dimension 2
    let p = fitted.expert_predict(1, 0, 4, &train, &[1.0]).unwrap();
    let expected = (2.0 * (-1.0f64).exp() + 4.0 * (-4.0f64).exp()) / ((-1.0f64).exp() + (-4.0f64).exp());
    assert!((p - expected).abs() < 1e-12);
    assert!((p - 2.0948517463551335).abs() < 1e-12);
}

#[test]
fn put_gain_targets_on_a_constant_path() {
    // every window sees the same price moves, so predictions equal targets
    let payoff = PayoffSpec {
        kind: PayoffKind::Put { strike: 110.0 },
        rate: 0.0,
        ..Default::default()
    };
    let gains = GainSpec::option(payoff, 2).unwrap();
    let train = vec![1.01; 30];
    let fitted = fit_stopper(&train, gains, EstimatorConfig::default()).unwrap();
    // g_2 = 110 - 100 * 1.01^2
    let g2 = 110.0 - 100.0 * 1.01f64 * 1.01;
    assert!(fitted.stage_targets(1).unwrap().iter().all(|y| (y - g2).abs() < 1e-12));
    let q1 = fitted.aggregate_predict(1, 30, &train, &[1.01]).unwrap();
    assert!((q1 - g2).abs() < 1e-9);
}
