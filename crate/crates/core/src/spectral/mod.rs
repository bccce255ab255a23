//! Truncated-SVD rank factorization of a Hankel block and extraction of a
//! weighted automaton from it.
//!
//! With `H = U D Vᵀ` and the split `P = U_r D_r`, `S = V_rᵀ`, the
//! pseudo-inverses are `P⁺ = D_r⁻¹ U_rᵀ` and `S⁺ = V_r`, so
//!
//! ```text
//! α₀ᵀ = h_{λ,S}ᵀ V_r      α∞ = D_r⁻¹ U_rᵀ h_{P,λ}      M_σ = D_r⁻¹ U_rᵀ H_σ V_r
//! ```

mod report;

use nalgebra::{DMatrix, DVector, SVD};
use thiserror::Error;

use crate::alphabet::Alphabet;
use crate::hankel::HankelBlocks;
use crate::wa::WeightedAutomaton;

pub use report::{detect_hankel_rank, read_spectrum, write_spectrum, SpectrumReport, DEFAULT_DROP_DECADES, FALLBACK_RATIO};

/// `σ_r/σ₁` below which a factorization is flagged as ill-conditioned.
pub const ILL_CONDITIONED_RATIO: f64 = 1e-12;

const SVD_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Thin SVD with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct FullSvd {
    u: DMatrix<f64>,
    singular_values: Vec<f64>,
    v: DMatrix<f64>,
}

impl FullSvd {
    pub fn compute(h: &DMatrix<f64>) -> Result<Self, SpectralError> {
        if h.is_empty() {
            return Err(SpectralError::InvalidInput("empty matrix".into()));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(SpectralError::NumericalFailure("matrix has non-finite entries".into()));
        }
        let svd = SVD::try_new(h.clone(), true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
            .ok_or_else(|| SpectralError::NumericalFailure("SVD did not converge".into()))?;
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
        let u = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
        let v = DMatrix::from_fn(v_t.ncols(), order.len(), |i, j| v_t[(order[j], i)]);
        Ok(Self { u, singular_values, v })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `min(p, s)`.
    pub fn max_rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn truncate(&self, r: usize) -> Result<Factorization, SpectralError> {
        self.check_rank(r)?;
        let d = &self.singular_values;
        let mut p = self.u.columns(0, r).into_owned();
        for (j, mut col) in p.column_iter_mut().enumerate() {
            col *= d[j];
        }
        let s = self.v.columns(0, r).transpose();
        Ok(Factorization { r, p, s, singular_values: d.clone(), ill_conditioned: is_ill_conditioned(d, r) })
    }

    fn check_rank(&self, r: usize) -> Result<(), SpectralError> {
        if r == 0 || r > self.max_rank() {
            Err(SpectralError::InvalidInput(format!("rank {r} outside 1..={}", self.max_rank())))
        } else {
            Ok(())
        }
    }
}

fn is_ill_conditioned(d: &[f64], r: usize) -> bool {
    d[0] == 0.0 || d[r - 1].is_nan() || d[r - 1] < ILL_CONDITIONED_RATIO * d[0]
}

/// `H ≈ P S` at rank `r`.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub r: usize,
    /// `U_r D_r`, p×r.
    pub p: DMatrix<f64>,
    /// `V_rᵀ`, r×s.
    pub s: DMatrix<f64>,
    /// Full descending spectrum of `H`.
    pub singular_values: Vec<f64>,
    /// `σ_r/σ₁ < 1e-12`: the trailing directions are numerical noise.
    pub ill_conditioned: bool,
}

impl Factorization {
    pub fn residual(&self, h: &DMatrix<f64>) -> f64 {
        (&self.p * &self.s - h).norm()
    }
}

pub fn rank_factorize(h: &DMatrix<f64>, r: usize) -> Result<Factorization, SpectralError> {
    FullSvd::compute(h)?.truncate(r)
}

/// Blocks projected once onto the leading `max_rank` singular directions,
/// so that extraction at any `r ≤ max_rank` is a slice plus a scaling.
#[derive(Debug, Clone)]
pub struct Extractor {
    alphabet: Alphabet,
    singular_values: Vec<f64>,
    /// `V_mᵀ h_{λ,S}`.
    alpha0: DVector<f64>,
    /// `U_mᵀ h_{P,λ}`.
    alpha_inf: DVector<f64>,
    /// `U_mᵀ H_σ V_m`.
    projected: Vec<DMatrix<f64>>,
}

impl Extractor {
    pub fn new(blocks: &HankelBlocks, svd: &FullSvd, max_rank: usize, alphabet: Alphabet) -> Result<Self, SpectralError> {
        svd.check_rank(max_rank)?;
        if blocks.h_sigma.len() != alphabet.len() {
            return Err(SpectralError::InvalidInput(format!(
                "{} symbol blocks for an alphabet of {}",
                blocks.h_sigma.len(),
                alphabet.len()
            )));
        }
        if svd.u.nrows() != blocks.p() || svd.v.nrows() != blocks.s() {
            return Err(SpectralError::InvalidInput("SVD does not match the block shape".into()));
        }
        let u = svd.u.columns(0, max_rank);
        let v = svd.v.columns(0, max_rank);
        let projected = blocks.h_sigma.iter().map(|hs| u.tr_mul(&(hs * v))).collect();
        Ok(Self {
            alphabet,
            singular_values: svd.singular_values.clone(),
            alpha0: v.tr_mul(&blocks.h_lambda_s),
            alpha_inf: u.tr_mul(&blocks.h_p_lambda),
            projected,
        })
    }

    pub fn max_rank(&self) -> usize {
        self.alpha0.len()
    }

    pub fn extract(&self, r: usize) -> Result<WeightedAutomaton, SpectralError> {
        if r == 0 || r > self.max_rank() {
            return Err(SpectralError::InvalidInput(format!("rank {r} outside 1..={}", self.max_rank())));
        }
        let d = &self.singular_values[..r];
        if d.iter().any(|&x| x <= 0.0) {
            return Err(SpectralError::NumericalFailure(format!("singular value σ_{r} is zero")));
        }
        let alpha0 = self.alpha0.rows(0, r).into_owned();
        let alpha_inf = DVector::from_fn(r, |i, _| self.alpha_inf[i] / d[i]);
        let matrices = self
            .projected
            .iter()
            .map(|g| DMatrix::from_fn(r, r, |i, j| g[(i, j)] / d[i]))
            .collect();
        WeightedAutomaton::new(self.alphabet.clone(), alpha0, matrices, alpha_inf, false)
            .map_err(|e| SpectralError::NumericalFailure(e.to_string()))
    }
}

/// One-shot extraction at rank `r`.
pub fn extract_wa(blocks: &HankelBlocks, r: usize, alphabet: Alphabet) -> Result<WeightedAutomaton, SpectralError> {
    let svd = FullSvd::compute(&blocks.h)?;
    Extractor::new(blocks, &svd, r, alphabet)?.extract(r)
}

/// `r²·|Σ| + 2r`.
pub fn wa_parameter_count(r: usize, alphabet_size: usize) -> usize {
    r * r * alphabet_size + 2 * r
}
