use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    #[default]
    Poly,
    Rbf,
}

/// `linear: x.z`, `poly: (gamma x.z + coef0)^degree`, `rbf: exp(-gamma |x - z|^2)`.
///
/// `gamma: None` resolves to `1 / dim` at training time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: Option<f64>,
    pub degree: u32,
    pub coef0: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::Poly,
            gamma: None,
            degree: 3,
            coef0: 1.0,
        }
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            ..Self::default()
        }
    }

    pub fn poly(degree: u32) -> Self {
        Self {
            kind: KernelKind::Poly,
            degree,
            ..Self::default()
        }
    }

    pub fn rbf(gamma: Option<f64>) -> Self {
        Self {
            kind: KernelKind::Rbf,
            gamma,
            ..Self::default()
        }
    }

    /// Copy with `gamma` fixed for feature dimension `dim`.
    pub fn resolved(&self, dim: usize) -> Self {
        Self {
            gamma: Some(self.gamma.unwrap_or(1.0 / dim.max(1) as f64)),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(format!("kernel gamma must be positive, got {g}"));
            }
        }
        if self.kind == KernelKind::Poly && self.degree == 0 {
            return Err("polynomial degree must be at least 1".into());
        }
        if !self.coef0.is_finite() {
            return Err("kernel coef0 must be finite".into());
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            KernelKind::Linear => "linear".into(),
            KernelKind::Poly => format!("poly{}", self.degree),
            KernelKind::Rbf => "rbf".into(),
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), z.len());
        let gamma = self.gamma.unwrap_or(1.0 / x.len().max(1) as f64);
        match self.kind {
            KernelKind::Linear => dot(x, z),
            KernelKind::Poly => (gamma * dot(x, z) + self.coef0).powi(self.degree as i32),
            KernelKind::Rbf => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> f64 {
    spec.eval(x, z)
}

#[inline]
pub(crate) fn dot(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let x = [1.0, 2.0];
        let z = [3.0, -1.0];
        assert_eq!(KernelSpec::linear().eval(&x, &z), 1.0);
        // gamma = 1/2: (0.5 + 1)^3
        assert!((KernelSpec::poly(3).eval(&x, &z) - 3.375).abs() < 1e-12);
        assert!((KernelSpec::rbf(Some(0.1)).eval(&x, &z) - (-1.3f64).exp()).abs() < 1e-12);
        assert_eq!(KernelSpec::rbf(None).eval(&x, &x), 1.0);
    }

    #[test]
    fn resolved_gamma() {
        assert_eq!(KernelSpec::default().resolved(4).gamma, Some(0.25));
        assert_eq!(KernelSpec::rbf(Some(2.0)).resolved(4).gamma, Some(2.0));
        assert!(KernelSpec::rbf(Some(-1.0)).validate().is_err());
        assert!(KernelSpec::poly(0).validate().is_err());
    }
}
