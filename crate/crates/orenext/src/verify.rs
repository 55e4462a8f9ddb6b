//! Whole-crate gradient verification.
//!
//! Re-derives every hand-written backward pass from central differences at
//! random probes and reports the worst relative error per operation. The
//! unit tests already check each operation once; this suite exists so the
//! `gradcheck` CLI subcommand (and the acceptance tests) can sweep all of
//! them in one deterministic pass.
//!
//! Probes are drawn away from the known non-smooth sets: layer-norm inputs
//! get unit-scale channel variance, the point sets fed to the sorted
//! localization loss keep their coordinates well separated so no sort
//! order can flip inside a difference step, the fixed point matching is
//! treated as an input, and smooth-L1 residuals stay clear of the
//! quadratic-to-linear transition.

use crate::backbone::{stone_block_backward, stone_block_forward, StoneBlockParams};
use crate::error::Result;
use crate::fpn::{fpn_backward, fpn_forward, FpnConfig, FpnParams};
use crate::fpn::{sparse_mlp_backward, sparse_mlp_forward, SparseMLPParams};
use crate::geometry::Pt;
use crate::loss::{
    loss_coarse, loss_coarse_backward, loss_pg_with_grad, loss_ploc_with_grad, loss_total,
    nearest_match, LossConfig,
};
use crate::point_head::{
    coarse_mask_head, coarse_mask_head_backward, point_classify, point_mlp_backward,
    CoarseHeadParams, CoarseMask, PointMlpParams,
};
use crate::tensor::gradcheck::{finite_diff_grad, max_rel_err};
use crate::tensor::{Matrix, ParamGroup, Tensor4};

/// Relative-error bound every operation must meet.
pub const VERIFY_TOL: f64 = 1e-5;

/// Probes per operation.
pub const VERIFY_PROBES: usize = 10;

/// Worst-case finite-difference comparison for one operation.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub name: &'static str,
    pub probes: usize,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<18} {:>2} probes  max rel err {:>12.3e}  tol {:>8.0e}  {}",
            self.name,
            self.probes,
            self.max_rel_err,
            self.tol,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

fn lcg(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
    move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn probe_seed(seed: u64, op: u64, probe: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(op.wrapping_mul(0x1000_0000_01b3))
        .wrapping_add(probe as u64)
}

fn report(name: &'static str, max_rel: f64) -> VerifyReport {
    VerifyReport { name, probes: VERIFY_PROBES, max_rel_err: max_rel, tol: VERIFY_TOL }
}

/// Runs every check and returns one report per operation, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<VerifyReport>> {
    Ok(vec![
        check_stone_block(seed)?,
        check_sparse_mlp_block(seed)?,
        check_fpn_forward(seed)?,
        check_coarse_mask_head(seed)?,
        check_point_classify(seed)?,
        check_loss_coarse(seed)?,
        check_loss_ploc(seed)?,
        check_loss_pg(seed)?,
        check_loss_total(seed)?,
    ])
}

/// True when every report in `reports` meets its tolerance.
pub fn all_passed(reports: &[VerifyReport]) -> bool {
    reports.iter().all(VerifyReport::passed)
}

fn check_stone_block(seed: u64) -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    for probe in 0..VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 1, probe));
        let x = Tensor4::from_fn(1, 6, 4, 4, |_, _, _, _| rng() * 2.0 - 1.0);
        let p = StoneBlockParams::init(6, 3, 1, &mut rng);
        let mix: Vec<f64> = (0..x.data.len()).map(|_| rng() - 0.5).collect();
        let grad_out = Tensor4 { data: mix.clone(), ..x.clone() };

        let (_, cache) = stone_block_forward(&x, &p)?;
        let mut grads = p.zeros_like();
        let grad_x = stone_block_backward(&p, &cache, &grad_out, &mut grads)?;

        let objective = |xx: &Tensor4, pp: &StoneBlockParams| -> Result<f64> {
            let (out, _) = stone_block_forward(xx, pp)?;
            Ok(out.data.iter().zip(&mix).map(|(a, b)| a * b).sum())
        };
        let num_p = finite_diff_grad(
            &mut |v| {
                let mut pp = p.clone();
                pp.load_flat(v)?;
                objective(&x, &pp)
            },
            &p.flatten(),
            1e-5,
        )?;
        let num_x = finite_diff_grad(
            &mut |v| objective(&Tensor4 { data: v.to_vec(), ..x.clone() }, &p),
            &x.data,
            1e-5,
        )?;
        worst = worst
            .max(max_rel_err(&grads.flatten(), &num_p))
            .max(max_rel_err(&grad_x.data, &num_x));
    }
    Ok(report("stone_block", worst))
}

fn check_sparse_mlp_block(seed: u64) -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    for probe in 0..VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 2, probe));
        let (c, h, w) = (5, 3, 4);
        let x = Tensor4::from_fn(1, c, h, w, |_, _, _, _| rng() * 2.0 - 1.0);
        let p = SparseMLPParams::init(c, h, w, &mut rng);
        let mix: Vec<f64> = (0..x.data.len()).map(|_| rng() - 0.5).collect();
        let grad_out = Tensor4 { data: mix.clone(), ..x.clone() };

        let (_, cache) = sparse_mlp_forward(&x, &p)?;
        let mut grads = p.zeros_like();
        let grad_x = sparse_mlp_backward(&p, &cache, &grad_out, &mut grads)?;

        let objective = |xx: &Tensor4, pp: &SparseMLPParams| -> Result<f64> {
            let (out, _) = sparse_mlp_forward(xx, pp)?;
            Ok(out.data.iter().zip(&mix).map(|(a, b)| a * b).sum())
        };
        let num_p = finite_diff_grad(
            &mut |v| {
                let mut pp = p.clone();
                pp.load_flat(v)?;
                objective(&x, &pp)
            },
            &p.flatten(),
            1e-5,
        )?;
        let num_x = finite_diff_grad(
            &mut |v| objective(&Tensor4 { data: v.to_vec(), ..x.clone() }, &p),
            &x.data,
            1e-5,
        )?;
        worst = worst
            .max(max_rel_err(&grads.flatten(), &num_p))
            .max(max_rel_err(&grad_x.data, &num_x));
    }
    Ok(report("sparse_mlp_block", worst))
}

fn check_fpn_forward(seed: u64) -> Result<VerifyReport> {
    let cfg = FpnConfig { out_channels: 4, sparse_blocks: 1 };
    let dims = [(5usize, 6usize, 8usize), (10, 3, 4)];
    let mut worst = 0.0f64;
    for probe in 0..VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 3, probe));
        let stages: Vec<Tensor4> = dims
            .iter()
            .map(|&(c, h, w)| Tensor4::from_fn(1, c, h, w, |_, _, _, _| rng() * 2.0 - 1.0))
            .collect();
        let p = FpnParams::init(&cfg, &dims, &mut rng)?;
        let mixes: Vec<Tensor4> = dims
            .iter()
            .map(|&(_, h, w)| Tensor4::from_fn(1, cfg.out_channels, h, w, |_, _, _, _| rng() - 0.5))
            .collect();

        let (_, cache) = fpn_forward(&stages, &cfg, &p)?;
        let mut grads = p.zeros_like();
        let grad_stages = fpn_backward(&cfg, &p, &cache, &mixes, &mut grads)?;

        let objective = |ss: &[Tensor4], pp: &FpnParams| -> Result<f64> {
            let (outs, _) = fpn_forward(ss, &cfg, pp)?;
            Ok(outs
                .iter()
                .zip(&mixes)
                .flat_map(|(o, m)| o.data.iter().zip(&m.data))
                .map(|(a, b)| a * b)
                .sum())
        };
        let num_p = finite_diff_grad(
            &mut |v| {
                let mut pp = p.clone();
                pp.load_flat(v)?;
                objective(&stages, &pp)
            },
            &p.flatten(),
            1e-5,
        )?;
        let analytic_s: Vec<f64> =
            grad_stages.iter().flat_map(|g| g.data.iter().copied()).collect();
        let flat_s: Vec<f64> = stages.iter().flat_map(|s| s.data.iter().copied()).collect();
        let num_s = finite_diff_grad(
            &mut |v| {
                let mut ss = stages.clone();
                let mut off = 0;
                for s in &mut ss {
                    let len = s.data.len();
                    s.data.copy_from_slice(&v[off..off + len]);
                    off += len;
                }
                objective(&ss, &p)
            },
            &flat_s,
            1e-5,
        )?;
        worst = worst
            .max(max_rel_err(&grads.flatten(), &num_p))
            .max(max_rel_err(&analytic_s, &num_s));
    }
    Ok(report("fpn_forward", worst))
}

fn check_coarse_mask_head(seed: u64) -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    for probe in 0..VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 4, probe));
        let crop = Tensor4::from_fn(1, 6, 7, 7, |_, _, _, _| rng() * 2.0 - 1.0);
        let p = CoarseHeadParams::init(6, 5, &mut rng);
        let mix: Vec<f64> = (0..49).map(|_| rng() - 0.5).collect();
        let grad_logits = Matrix { rows: 7, cols: 7, data: mix.clone() };

        let (_, cache) = coarse_mask_head(&crop, &p)?;
        let mut grads = p.zeros_like();
        let grad_crop = coarse_mask_head_backward(&p, &cache, &grad_logits, &mut grads)?;

        let objective = |xx: &Tensor4, pp: &CoarseHeadParams| -> Result<f64> {
            let (cm, _) = coarse_mask_head(xx, pp)?;
            Ok(cm.logits.data.iter().zip(&mix).map(|(a, b)| a * b).sum())
        };
        let num_p = finite_diff_grad(
            &mut |v| {
                let mut pp = p.clone();
                pp.load_flat(v)?;
                objective(&crop, &pp)
            },
            &p.flatten(),
            1e-5,
        )?;
        let num_x = finite_diff_grad(
            &mut |v| objective(&Tensor4 { data: v.to_vec(), ..crop.clone() }, &p),
            &crop.data,
            1e-5,
        )?;
        worst = worst
            .max(max_rel_err(&grads.flatten(), &num_p))
            .max(max_rel_err(&grad_crop.data, &num_x));
    }
    Ok(report("coarse_mask_head", worst))
}

fn check_point_classify(seed: u64) -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    for probe in 0..VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 5, probe));
        let n = 8;
        let feats = Matrix {
            rows: n,
            cols: 5,
            data: (0..n * 5).map(|_| rng() * 2.0 - 1.0).collect(),
        };
        let p = PointMlpParams::init(5, 6, 1, &mut rng);
        let mix: Vec<f64> = (0..n).map(|_| rng() - 0.5).collect();

        let (_, cache) = point_classify(&feats, &p)?;
        let mut grads = p.zeros_like();
        let grad_out = Matrix { rows: n, cols: 1, data: mix.clone() };
        let grad_feats = point_mlp_backward(&p, &cache, &grad_out, &mut grads)?;

        let objective = |ff: &Matrix, pp: &PointMlpParams| -> Result<f64> {
            let (logits, _) = point_classify(ff, pp)?;
            Ok(logits.iter().zip(&mix).map(|(a, b)| a * b).sum())
        };
        let num_p = finite_diff_grad(
            &mut |v| {
                let mut pp = p.clone();
                pp.load_flat(v)?;
                objective(&feats, &pp)
            },
            &p.flatten(),
            1e-5,
        )?;
        let num_f = finite_diff_grad(
            &mut |v| {
                objective(&Matrix { rows: n, cols: 5, data: v.to_vec() }, &p)
            },
            &feats.data,
            1e-5,
        )?;
        worst = worst
            .max(max_rel_err(&grads.flatten(), &num_p))
            .max(max_rel_err(&grad_feats.data, &num_f));
    }
    Ok(report("point_classify", worst))
}

fn check_loss_coarse(seed: u64) -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    for probe in 0..VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 6, probe));
        let m = 5;
        let logits: Vec<f64> = (0..m * m).map(|_| rng() * 4.0 - 2.0).collect();
        let target = Matrix {
            rows: m,
            cols: m,
            data: (0..m * m).map(|_| f64::from(rng() > 0.5)).collect(),
        };
        let coarse = CoarseMask::new(Matrix { rows: m, cols: m, data: logits.clone() })?;
        let analytic = loss_coarse_backward(&coarse, &target, 1.0);
        let num = finite_diff_grad(
            &mut |v| {
                let cm = CoarseMask::new(Matrix { rows: m, cols: m, data: v.to_vec() })?;
                loss_coarse(&cm, &target)
            },
            &logits,
            1e-6,
        )?;
        worst = worst.max(max_rel_err(&analytic.data, &num));
    }
    Ok(report("loss_coarse", worst))
}

fn flat_pts(pts: &[Pt]) -> Vec<f64> {
    pts.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflat_pts(v: &[f64]) -> Vec<Pt> {
    v.chunks_exact(2).map(|c| Pt::new(c[0], c[1])).collect()
}

/// Smallest gap between x coordinates within a set; the sorted loss is
/// non-smooth only where an x order can flip.
fn min_x_gap(pts: &[Pt]) -> f64 {
    let mut xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn check_loss_ploc(seed: u64) -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    let mut probe = 0usize;
    let mut attempt = 0u64;
    while probe < VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 7, probe).wrapping_add(attempt << 32));
        attempt += 1;
        let n = 8;
        let pred: Vec<Pt> = (0..n).map(|_| Pt::new(rng(), rng())).collect();
        let gt: Vec<Pt> = (0..n).map(|_| Pt::new(rng(), rng())).collect();
        // Keep the probe away from sort flips and zero-length pairs.
        if min_x_gap(&pred) < 1e-3 || min_x_gap(&gt) < 1e-3 {
            continue;
        }
        let (_, analytic) = loss_ploc_with_grad(&pred, &gt)?;
        if analytic.iter().any(|g| !g.x.is_finite() || !g.y.is_finite()) {
            continue;
        }
        let num = finite_diff_grad(
            &mut |v| Ok(loss_ploc_with_grad(&unflat_pts(v), &gt)?.0),
            &flat_pts(&pred),
            1e-6,
        )?;
        worst = worst.max(max_rel_err(&flat_pts(&analytic), &num));
        probe += 1;
    }
    Ok(report("loss_ploc", worst))
}

fn check_loss_pg(seed: u64) -> Result<VerifyReport> {
    let delta = 1.0;
    let mut worst = 0.0f64;
    let mut probe = 0usize;
    let mut attempt = 0u64;
    while probe < VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 8, probe).wrapping_add(attempt << 32));
        attempt += 1;
        let pred: Vec<Pt> = (0..6).map(|_| Pt::new(rng() * 2.0, rng() * 2.0)).collect();
        let gt: Vec<Pt> = (0..12).map(|_| Pt::new(rng() * 2.0, rng() * 2.0)).collect();
        // The matching is an input held fixed across the difference step;
        // only the smooth-L1 transition needs avoiding.
        let match_idx = nearest_match(&pred, &gt)?;
        let near_kink = pred.iter().zip(&match_idx).any(|(p, &m)| {
            let g = gt[m];
            ((p.x - g.x).abs() - delta).abs() < 0.01 || ((p.y - g.y).abs() - delta).abs() < 0.01
        });
        if near_kink {
            continue;
        }
        let (_, analytic) = loss_pg_with_grad(&pred, &gt, &match_idx, delta)?;
        let num = finite_diff_grad(
            &mut |v| Ok(loss_pg_with_grad(&unflat_pts(v), &gt, &match_idx, delta)?.0),
            &flat_pts(&pred),
            1e-6,
        )?;
        worst = worst.max(max_rel_err(&flat_pts(&analytic), &num));
        probe += 1;
    }
    Ok(report("loss_pg", worst))
}

fn check_loss_total(seed: u64) -> Result<VerifyReport> {
    let cfg = LossConfig::default();
    let mut worst = 0.0f64;
    for probe in 0..VERIFY_PROBES {
        let mut rng = lcg(probe_seed(seed, 9, probe));
        let comps: Vec<f64> = (0..4).map(|_| rng() * 3.0).collect();
        let analytic = [1.0, cfg.alpha, cfg.beta, 1.0];
        let num = finite_diff_grad(
            &mut |v| Ok(loss_total(v[0], v[1], v[2], v[3], &cfg).total),
            &comps,
            1e-6,
        )?;
        worst = worst.max(max_rel_err(&analytic, &num));
    }
    Ok(report("loss_total", worst))
}
