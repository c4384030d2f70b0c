use super::{generate_scenario, run_pipeline, scenario_seed, ExperimentConfig, HarnessError, Method, NoiseLevel};
use crate::detection::{rotated_iou_bev, RotatedBox3D};
use crate::fusion::{confidence_embed, BevGrid, GridSpec};
use crate::geometry::{random_pose, seeded_rng};
use crate::pgc::{confidence_from_error, oracle_predict, ransac_pose, OracleErrorModel, RansacConfig};
use crate::temporal::{attention_weights, layer_forward, temporal_encoding, LayerParams};
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<SelftestCheck>,
}

type CheckResult = Result<String, String>;
type Check = (&'static str, fn(u64) -> CheckResult);

fn ensure(ok: bool, detail: String) -> CheckResult {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn confidence_curve(_: u64) -> CheckResult {
    let mut prev = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.5, 1.0, 2.0, 10.0] {
        let c = confidence_from_error(eps).map_err(|e| e.to_string())?;
        worst = worst.max((c - 1.0 / (1.0 + eps * eps)).abs());
        if c >= prev {
            return Err(format!("not decreasing at eps={eps}"));
        }
        prev = c;
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))
}

fn encoding_origin(_: u64) -> CheckResult {
    for d in [4, 8, 16] {
        let e = temporal_encoding(0.0, d).map_err(|e| e.to_string())?;
        let expect: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        if e != expect {
            return Err(format!("E_0 for D={d} is {e:?}"));
        }
    }
    Ok("E_0 = (0, 1, 0, 1, ...)".into())
}

fn iou_oracles(_: u64) -> CheckResult {
    let b = |x: f64, theta: f64| RotatedBox3D::new(x, 0.0, 0.5, 1.0, 2.0, 2.0, theta).map_err(|e| e.to_string());
    let same = rotated_iou_bev(&b(0.0, 0.3)?, &b(0.0, 0.3)?).map_err(|e| e.to_string())?;
    let apart = rotated_iou_bev(&b(0.0, 0.0)?, &b(5.0, 0.0)?).map_err(|e| e.to_string())?;
    let half = rotated_iou_bev(&b(0.0, 0.0)?, &b(1.0, 0.0)?).map_err(|e| e.to_string())?;
    ensure(
        (same - 1.0).abs() < 1e-9 && apart == 0.0 && (half - 1.0 / 3.0).abs() < 1e-9,
        format!("iou {same}, {apart}, {half}"),
    )
}

fn confidence_channels(seed: u64) -> CheckResult {
    let mut rng = seeded_rng(seed);
    let spec = GridSpec::centered(4, 4, 1.0);
    let sigmas: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
    let grids = vec![BevGrid::zeros(spec, 1); 4];
    let out = confidence_embed(&grids, &sigmas).map_err(|e| e.to_string())?;
    let sum: f64 = out.iter().map(|g| g.get(1, 0, 0)).sum();
    let scaled: Vec<f64> = sigmas.iter().map(|s| s * 4.0).collect();
    let out2 = confidence_embed(&grids, &scaled).map_err(|e| e.to_string())?;
    ensure((sum - 1.0).abs() <= 1e-12 && out == out2, format!("weights sum to {sum}"))
}

fn identity_layer(seed: u64) -> CheckResult {
    let mut rng = seeded_rng(seed);
    let z = DMatrix::from_fn(12, 8, |_, _| rng.random_range(-1.0..1.0));
    let p = LayerParams::zeros(8, 2, 16);
    let out = layer_forward(&p, &z).map_err(|e| e.to_string())?;
    let attn = attention_weights(&LayerParams::random(8, 2, 16, 0.5, &mut rng), &z).map_err(|e| e.to_string())?;
    let row_err = attn
        .iter()
        .flat_map(|a| a.row_iter().map(|r| (r.sum() - 1.0).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    ensure(out == z && row_err <= 1e-12, format!("attention row-sum error {row_err:e}"))
}

fn ransac_recovery(seed: u64) -> CheckResult {
    let mut rng = seeded_rng(seed);
    let pose = random_pose(&mut rng, 50.0);
    let cloud = (0..512)
        .map(|_| nalgebra::Vector3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(0.0..3.0)))
        .collect();
    let pred = oracle_predict(&cloud, &pose, &OracleErrorModel::default(), &mut rng).map_err(|e| e.to_string())?;
    let est = ransac_pose(&pred, &RansacConfig { seed, ..RansacConfig::default() }).map_err(|e| e.to_string())?;
    let (t, r) = crate::geometry::pose_error(&est.pose, &pose);
    ensure(t < 0.1 && r < 0.5, format!("error {t:.4} m, {r:.4} deg"))
}

fn scenario_determinism(seed: u64) -> CheckResult {
    let cfg = ExperimentConfig::default();
    let s = scenario_seed(seed, 0);
    let a = generate_scenario(&cfg.scenario, s, &mut seeded_rng(s)).map_err(|e| e.to_string())?;
    let b = generate_scenario(&cfg.scenario, s, &mut seeded_rng(s)).map_err(|e| e.to_string())?;
    ensure(a == b, format!("{} objects, {} agents", a.world_objects.len(), a.agents.len()))
}

fn ledger_completeness(seed: u64) -> CheckResult {
    let cfg = ExperimentConfig::default();
    let s = scenario_seed(seed, 0);
    let scenario = generate_scenario(&cfg.scenario, s, &mut seeded_rng(s)).map_err(|e| e.to_string())?;
    let out = run_pipeline(&scenario, Method::Pgc, NoiseLevel(0.0, 0.0), &cfg).map_err(|e| e.to_string())?;
    let by_kind: usize = out.ledger.by_kind().values().sum();
    let pose = out.ledger.messages(super::MessageKind::Pose).map(|r| r.bytes).min().unwrap_or(0);
    let blob = out.ledger.messages(super::MessageKind::Features).map(|r| r.bytes).min().unwrap_or(0);
    ensure(
        by_kind == out.ledger.total_bytes() && pose > 0 && pose < blob,
        format!("{} messages, {} bytes", out.ledger.records.len(), out.ledger.total_bytes()),
    )
}

/// Fast invariant checks across all modules.
pub fn run_selftest(cfg: &ExperimentConfig) -> Result<SelftestReport, HarnessError> {
    cfg.validate()?;
    let checks: [Check; 8] = [
        ("confidence_curve", confidence_curve),
        ("temporal_encoding_origin", encoding_origin),
        ("rotated_iou_oracles", iou_oracles),
        ("confidence_channels", confidence_channels),
        ("identity_layer", identity_layer),
        ("ransac_recovery", ransac_recovery),
        ("scenario_determinism", scenario_determinism),
        ("ledger_completeness", ledger_completeness),
    ];
    let checks: Vec<SelftestCheck> = checks
        .iter()
        .map(|(name, f)| {
            let r = f(cfg.seed);
            let (passed, detail) = match r {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            if !passed {
                log::error!("selftest {name} failed: {detail}");
            }
            SelftestCheck {
                name: name.to_string(),
                passed,
                detail,
            }
        })
        .collect();
    Ok(SelftestReport {
        seed: cfg.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for seed in [0, 1, 7] {
            let r = run_selftest(&ExperimentConfig { seed, ..ExperimentConfig::default() }).unwrap();
            assert!(r.passed, "{r:#?}");
        }
    }
}
