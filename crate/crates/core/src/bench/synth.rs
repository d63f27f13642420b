use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2x3, UnitQuaternion, Quaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bench::Dataset;
use crate::error::{Error, Result};
use crate::model::{project, RotationStack, ShapeMatrix};

/// Parameters of the union-of-subspaces deforming scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub frames: usize,
    pub points: usize,
    /// Number of independently deforming point groups.
    pub subspaces: usize,
    /// Deformation modes per group (on top of the group's mean shape).
    pub rank: usize,
    /// Amplitude of the deformation modes relative to the group's extent.
    pub deform_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 30,
            points: 600,
            subspaces: 3,
            rank: 2,
            deform_scale: 0.5,
            seed: 7,
        }
    }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniformly distributed rotation, first two rows.
pub fn random_camera<R: Rng>(rng: &mut R) -> Matrix2x3<f64> {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let rot = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    rot.matrix().fixed_view::<2, 3>(0, 0).into_owned()
}

/// Generates a deforming scene whose point groups each move inside their own
/// low-dimensional shape space, observed by random orthographic cameras.
///
/// Group `k` fills a box of half-width 0.6 around its own centre; frame `f` of the group is
/// `mean_k + Σ_j c_kj(f) B_kj` with smooth sinusoidal coefficients `c_kj`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.frames == 0 || cfg.points == 0 {
        return Err(Error::InvalidConfig("frames and points must be positive".into()));
    }
    if cfg.subspaces == 0 || cfg.subspaces > cfg.points {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= subspaces <= points, got {} for {} points",
            cfg.subspaces, cfg.points
        )));
    }
    if cfg.rank == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    if !(cfg.deform_scale >= 0.0) || !cfg.deform_scale.is_finite() {
        return Err(Error::InvalidConfig("deform_scale must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (f_count, p_count, k_count) = (cfg.frames, cfg.points, cfg.subspaces);

    let mut shape = DMatrix::zeros(3 * f_count, p_count);
    let base = p_count / k_count;
    let extra = p_count % k_count;
    let mut start = 0;
    for k in 0..k_count {
        let size = base + usize::from(k < extra);
        let angle = 2.0 * PI * k as f64 / k_count as f64;
        let centre = if k_count > 1 {
            [1.5 * angle.cos(), 1.5 * angle.sin(), 0.3 * (k as f64 - 1.0)]
        } else {
            [0.0; 3]
        };
        let mean = DMatrix::from_fn(3, size, |c, _| centre[c] + rng.random_range(-0.6..0.6));
        let bases: Vec<DMatrix<f64>> = (0..cfg.rank)
            .map(|_| DMatrix::from_fn(3, size, |_, _| cfg.deform_scale * 0.5 * gauss(&mut rng)))
            .collect();
        let waves: Vec<(f64, f64)> = (0..cfg.rank)
            .map(|_| (rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI)))
            .collect();
        for f in 0..f_count {
            let t = f as f64 / f_count.max(2) as f64;
            let mut slab = mean.clone();
            for (b, &(freq, phase)) in bases.iter().zip(&waves) {
                slab += b * (2.0 * PI * freq * t + phase).sin();
            }
            shape.view_mut((3 * f, start), (3, size)).copy_from(&slab);
        }
        start += size;
    }

    let mut cam_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let cams: Vec<Matrix2x3<f64>> = (0..f_count).map(|_| random_camera(&mut cam_rng)).collect();
    let rotations = RotationStack::new(cams)?;
    let s_gt = ShapeMatrix::new(shape)?;
    let w = project(&rotations, &s_gt)?;
    Ok(Dataset {
        name: format!(
            "synth-f{}-p{}-k{}-r{}-d{}-s{}",
            cfg.frames, cfg.points, cfg.subspaces, cfg.rank, cfg.deform_scale, cfg.seed
        ),
        w,
        r: Some(rotations),
        s_gt: Some(s_gt),
    })
}
