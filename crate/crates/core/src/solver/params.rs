use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which self-expression constraints are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Neither spatial nor temporal constraint.
    Nc,
    /// Spatial (trajectory-space) constraint only.
    Sp,
    /// Temporal (shape-space) constraint only.
    Tp,
    #[default]
    Both,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Nc, Mode::Sp, Mode::Tp, Mode::Both];

    pub fn spatial(self) -> bool {
        matches!(self, Mode::Sp | Mode::Both)
    }

    pub fn temporal(self) -> bool {
        matches!(self, Mode::Tp | Mode::Both)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Nc => "nc",
            Mode::Sp => "sp",
            Mode::Tp => "tp",
            Mode::Both => "both",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nc" => Ok(Mode::Nc),
            "sp" => Ok(Mode::Sp),
            "tp" => Ok(Mode::Tp),
            "both" => Ok(Mode::Both),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// How the coefficient update applies `(2λΩ + βI)⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CUpdateForm {
    /// `(2λΩ + βI) C = 2λΩ + βJ − Y`, the exact minimiser of the subproblem.
    #[default]
    Left,
    /// `C = (2λΩ + βJ − Y)(2λΩ + βI)⁻¹`, the literal right-inverse form.
    RightInverse,
}

impl fmt::Display for CUpdateForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CUpdateForm::Left => "left",
            CUpdateForm::RightInverse => "right",
        })
    }
}

impl FromStr for CUpdateForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(CUpdateForm::Left),
            "right" => Ok(CUpdateForm::RightInverse),
            other => Err(Error::InvalidConfig(format!("unknown coefficient update '{other}'"))),
        }
    }
}

/// Scale of the default nuclear weight on the rearranged shape:
/// `gamma = GAMMA_SCALE / sqrt(max(3P, F))` on unit-RMS measurements.
pub const GAMMA_SCALE: f64 = 1.0;

/// Shortest text that parses back to `v`, in exponent form for very large or small values.
fn fmt_real(v: f64) -> String {
    if v != 0.0 && !(1e-3..1e4).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Tuning parameters of the ADMM solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Spatial self-expression residual weight.
    pub lambda1: f64,
    /// Temporal self-expression residual weight.
    pub lambda2: f64,
    /// Nuclear weight on `C_s` (through `J_s`).
    pub lambda3: f64,
    /// Nuclear weight on `C_t` (through `J_t`).
    pub lambda4: f64,
    /// Nuclear weight on the rearranged shape. `None` picks
    /// `GAMMA_SCALE / sqrt(max(3P, F))`.
    pub gamma: Option<f64>,
    pub rho: f64,
    pub beta0: f64,
    pub beta_max: f64,
    pub eps: f64,
    pub k_s: usize,
    pub k_t: usize,
    /// Singular values kept per spatial group.
    pub n_s: usize,
    /// Singular values kept per temporal group.
    pub n_t: usize,
    pub sigma_eps: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub mode: Mode,
    pub c_update: CUpdateForm,
    /// Rescale `W` to unit RMS before solving (the shape is scaled back afterwards).
    pub normalize: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.1,
            lambda4: 0.1,
            gamma: None,
            rho: 1.1,
            beta0: 1e-3,
            beta_max: 1e6,
            eps: 1e-12,
            k_s: 10,
            k_t: 3,
            n_s: 9,
            n_t: 9,
            sigma_eps: 2.0,
            max_iters: 300,
            seed: 0,
            mode: Mode::Both,
            c_update: CUpdateForm::Left,
            normalize: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return bad(format!("gamma must be a finite nonnegative number, got {g}"));
            }
        }
        if !(self.rho > 1.0) {
            return bad(format!("rho must exceed 1, got {}", self.rho));
        }
        if !(self.beta0 > 0.0) || !(self.beta0 < self.beta_max) {
            return bad(format!(
                "need 0 < beta0 < beta_max, got {} and {}",
                self.beta0, self.beta_max
            ));
        }
        if !(self.eps >= 0.0) {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        if self.k_s == 0 || self.k_t == 0 || self.n_s == 0 || self.n_t == 0 {
            return bad("group counts and kept ranks must be positive".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !self.sigma_eps.is_finite() || self.sigma_eps <= 0.0 {
            return bad(format!("sigma_eps must be positive, got {}", self.sigma_eps));
        }
        Ok(())
    }

    /// Nuclear weight used for a `frames × points` problem.
    pub fn effective_gamma(&self, frames: usize, points: usize) -> f64 {
        self.gamma
            .unwrap_or_else(|| GAMMA_SCALE / ((3 * points).max(frames) as f64).sqrt())
    }

    /// `(λ1, λ2, λ3, λ4)` after the ablation mode has zeroed the disabled side.
    pub fn effective_lambdas(&self) -> [f64; 4] {
        let sp = self.mode.spatial();
        let tp = self.mode.temporal();
        [
            if sp { self.lambda1 } else { 0.0 },
            if tp { self.lambda2 } else { 0.0 },
            if sp { self.lambda3 } else { 0.0 },
            if tp { self.lambda4 } else { 0.0 },
        ]
    }

    /// Whether the spatial ξ/ζ refinement runs.
    pub fn spatial_active(&self) -> bool {
        let [l1, _, l3, _] = self.effective_lambdas();
        l1 > 0.0 || l3 > 0.0
    }

    /// Whether the temporal ξ/ζ refinement runs.
    pub fn temporal_active(&self) -> bool {
        let [_, l2, _, l4] = self.effective_lambdas();
        l2 > 0.0 || l4 > 0.0
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Sets one parameter by its [`to_pairs`](Self::to_pairs) name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value
                .trim()
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("{key}: {e}")))
        }
        match key.trim() {
            "lambda1" => self.lambda1 = num(key, value)?,
            "lambda2" => self.lambda2 = num(key, value)?,
            "lambda3" => self.lambda3 = num(key, value)?,
            "lambda4" => self.lambda4 = num(key, value)?,
            "gamma" => {
                self.gamma = match value.trim() {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "rho" => self.rho = num(key, value)?,
            "beta0" => self.beta0 = num(key, value)?,
            "beta_max" => self.beta_max = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "ks" => self.k_s = num(key, value)?,
            "kt" => self.k_t = num(key, value)?,
            "ns" => self.n_s = num(key, value)?,
            "nt" => self.n_t = num(key, value)?,
            "sigma_eps" => self.sigma_eps = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "mode" => self.mode = value.trim().parse()?,
            "c_update" => self.c_update = value.trim().parse()?,
            "normalize" => self.normalize = num(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown parameter '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got '{line}'")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Flat `name, value` listing, as used by reports and the flag dump.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda1", fmt_real(self.lambda1)),
            ("lambda2", fmt_real(self.lambda2)),
            ("lambda3", fmt_real(self.lambda3)),
            ("lambda4", fmt_real(self.lambda4)),
            (
                "gamma",
                self.gamma.map_or_else(|| "auto".to_string(), fmt_real),
            ),
            ("rho", fmt_real(self.rho)),
            ("beta0", fmt_real(self.beta0)),
            ("beta_max", fmt_real(self.beta_max)),
            ("eps", fmt_real(self.eps)),
            ("ks", self.k_s.to_string()),
            ("kt", self.k_t.to_string()),
            ("ns", self.n_s.to_string()),
            ("nt", self.n_t.to_string()),
            ("sigma_eps", fmt_real(self.sigma_eps)),
            ("max_iters", self.max_iters.to_string()),
            ("seed", self.seed.to_string()),
            ("mode", self.mode.to_string()),
            ("c_update", self.c_update.to_string()),
            ("normalize", self.normalize.to_string()),
        ]
    }
}
