//! Hybrid-system energy models and discrete Schrodinger dynamics on
//! lattices.
//!
//! The internal Hamiltonian of a hybrid system is not fixed by the theory,
//! so [`EnergyModel`] is a plug-in. Two built-ins are provided because they
//! bracket the open convergence question for energy sequences along Cauchy
//! sequences: the `magnitude` model (continuous in the value, so its energy
//! sequences converge whenever the values do) and the `digit-sum` model
//! (which diverges on ever-lengthening truncation sequences). Energies are
//! always evaluated on the trimmed representation, which makes them
//! well defined on arithmetic-equality classes.
//!
//! Time evolution is the explicit forward-difference step
//!
//! ```text
//! ψ' = ψ - (i·Δt/ħ)·Hψ,    Hψ = -(ħ²/2m)·Δf·Δb ψ + V·ψ
//! ```
//!
//! exactly as the discrete equation is written. The step is deliberately
//! NOT unitary: each step grows the squared norm by `(Δt/ħ)²·‖Hψ‖²`, an
//! identity the diagnostics expose and the tests pin. A dense
//! eigendecomposition propagator is available as a labeled reference for
//! comparison on small lattices; it is never silently substituted.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cauchy::{CauchyError, NumeralSequence};
use crate::frame::{FrameError, HybridTupleImage, Lattice, LatticeImage};
use crate::numeral::{NumeralError, NumeralState, Sign};
use crate::qstate::Complex64;

/// Site cap for the dense unitary reference propagator.
pub const DEFAULT_UNITARY_SITE_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("LatticeTooLarge: {sites} sites exceed the cap of {cap}")]
    LatticeTooLarge { sites: usize, cap: usize },
    #[error("LatticeMismatch: {0}")]
    LatticeMismatch(String),
    #[error("ImageMismatch: {0}")]
    ImageMismatch(String),
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Numeral(#[from] NumeralError),
    #[error(transparent)]
    Cauchy(#[from] CauchyError),
}

impl DynamicsError {
    pub fn name(&self) -> &'static str {
        match self {
            DynamicsError::LatticeTooLarge { .. } => "LatticeTooLarge",
            DynamicsError::LatticeMismatch(_) => "LatticeMismatch",
            DynamicsError::ImageMismatch(_) => "ImageMismatch",
            DynamicsError::InvalidParameter(_) => "InvalidParameter",
            DynamicsError::Frame(e) => e.name(),
            DynamicsError::Numeral(e) => e.name(),
            DynamicsError::Cauchy(e) => e.name(),
        }
    }
}

// ----------------------------------------------------------------------
// Energy models.
// ----------------------------------------------------------------------

#[derive(Clone)]
enum EnergyKind {
    Magnitude,
    DigitSum,
    Custom(Arc<dyn Fn(&NumeralState) -> f64 + Send + Sync>),
}

/// A pluggable internal-energy assignment for hybrid-system states. The
/// evaluator only ever sees trimmed states, so arithmetically equal states
/// always receive the same energy.
#[derive(Clone)]
pub struct EnergyModel {
    name: String,
    scale: f64,
    kind: EnergyKind,
}

impl fmt::Debug for EnergyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnergyModel")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .finish()
    }
}

impl EnergyModel {
    /// `ε·|value|`: continuous in the represented value.
    pub fn magnitude(scale: f64) -> Self {
        EnergyModel {
            name: "magnitude".into(),
            scale,
            kind: EnergyKind::Magnitude,
        }
    }

    /// `ε·Σ s(j)` over the trimmed digits: sensitive to representation
    /// length, hence divergent along growing truncation sequences.
    pub fn digit_sum(scale: f64) -> Self {
        EnergyModel {
            name: "digit-sum".into(),
            scale,
            kind: EnergyKind::DigitSum,
        }
    }

    /// A custom evaluator; it receives the trimmed state.
    pub fn custom<F>(name: impl Into<String>, scale: f64, f: F) -> Self
    where
        F: Fn(&NumeralState) -> f64 + Send + Sync + 'static,
    {
        EnergyModel {
            name: name.into(),
            scale,
            kind: EnergyKind::Custom(Arc::new(f)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The energy of a state: trim first, then evaluate.
    pub fn energy_of(&self, state: &NumeralState) -> f64 {
        let trimmed = state.trim();
        let raw = match &self.kind {
            EnergyKind::Magnitude => trimmed.value().to_f64().unwrap_or(f64::NAN).abs(),
            EnergyKind::DigitSum => trimmed.digits().iter().map(|&d| d as f64).sum(),
            EnergyKind::Custom(f) => f(&trimmed),
        };
        self.scale * raw
    }
}

/// The energy of a state under a model; the trim rule makes this a function
/// of the represented value, not of the padding.
pub fn energy_of(state: &NumeralState, model: &EnergyModel) -> f64 {
    model.energy_of(state)
}

/// The energy of a parent-frame point image: the sum over the `D` space
/// components. The time component labels the point but carries no energy
/// contribution.
pub fn tuple_energy(image: &HybridTupleImage, model: &EnergyModel) -> f64 {
    image.space().iter().map(|s| model.energy_of(s)).sum()
}

/// Convergence report for the energies along a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergenceFlag {
    Convergent,
    Divergent,
    Inconclusive,
}

impl fmt::Display for ConvergenceFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvergenceFlag::Convergent => "CONVERGENT",
            ConvergenceFlag::Divergent => "DIVERGENT",
            ConvergenceFlag::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Energies along a basis-state sequence with a tail-spread convergence
/// assessment. The tail is the final quarter of the window.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub energies: Vec<f64>,
    pub tail_spread: f64,
    pub flag: ConvergenceFlag,
}

/// Evaluates `E_n = energy_of(ψ(n))` for `n = 0..=n_max` and classifies the
/// tail: spread within `tol` is CONVERGENT; a monotone sequence whose tail
/// still moves by more than `tol` is DIVERGENT; anything else is
/// INCONCLUSIVE.
pub fn energy_sequence(
    seq: &NumeralSequence,
    model: &EnergyModel,
    n_max: u64,
    tol: f64,
) -> Result<EnergyReport, DynamicsError> {
    let mut energies = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        energies.push(model.energy_of(&seq.basis_term(n)?));
    }
    let tail_start = (energies.len() - 1) * 3 / 4;
    let tail = &energies[tail_start..];
    let tail_spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let nondecreasing = energies.windows(2).all(|w| w[0] <= w[1]);
    let nonincreasing = energies.windows(2).all(|w| w[0] >= w[1]);
    let flag = if tail_spread <= tol {
        ConvergenceFlag::Convergent
    } else if nondecreasing || nonincreasing {
        ConvergenceFlag::Divergent
    } else {
        ConvergenceFlag::Inconclusive
    };
    Ok(EnergyReport {
        energies,
        tail_spread,
        flag,
    })
}

// ----------------------------------------------------------------------
// Hybrid-system metadata.
// ----------------------------------------------------------------------

/// Role tag distinguishing hybrid systems bound to lattice parts or to the
/// components of a complex pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemRole {
    Generic,
    Space,
    Time,
    RealPart,
    ImagPart,
}

/// A hybrid system `S_{j,k',L,m}`: simultaneously a rational-number system
/// (its basis states are number values) and a physical system with a mass
/// and an internal energy model. `label` is the `h` parameter telling
/// several systems of the same shape apart; energies never depend on it.
#[derive(Debug, Clone)]
pub struct HybridSystem {
    pub stage: i64,
    pub base: u32,
    pub len: u32,
    pub point: u32,
    pub label: String,
    pub mass: f64,
    pub energy_model: EnergyModel,
    pub role: SystemRole,
}

impl HybridSystem {
    pub fn new(
        stage: i64,
        base: u32,
        len: u32,
        point: u32,
        label: impl Into<String>,
        mass: f64,
        energy_model: EnergyModel,
    ) -> Result<Self, DynamicsError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base).into());
        }
        if point > len {
            return Err(FrameError::InvalidSpacing { len, point }.into());
        }
        if mass <= 0.0 {
            return Err(DynamicsError::InvalidParameter(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(HybridSystem {
            stage,
            base,
            len,
            point,
            label: label.into(),
            mass,
            energy_model,
            role: SystemRole::Generic,
        })
    }

    pub fn with_role(mut self, role: SystemRole) -> Self {
        self.role = role;
        self
    }

    /// A real/imaginary pair of identically shaped systems; the role tags
    /// `r` and `i` only ever occur together.
    pub fn complex_pair(self, real_label: &str, imag_label: &str) -> (Self, Self) {
        let mut re = self.clone();
        re.label = real_label.into();
        re.role = SystemRole::RealPart;
        let mut im = self;
        im.label = imag_label.into();
        im.role = SystemRole::ImagPart;
        (re, im)
    }
}

// ----------------------------------------------------------------------
// Wavefunctions on lattices.
// ----------------------------------------------------------------------

/// How missing neighbors at the lattice edge are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Indices wrap around modulo `M`.
    Periodic,
    /// Sites beyond the edge hold amplitude zero.
    FixedZero,
}

/// A complex amplitude per lattice space point: the equal-time slice of
/// `Ψ(x, t)`. Flat storage, dimension 0 varying fastest.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    lattice: Lattice,
    boundary: BoundaryMode,
    amps: Vec<Complex64>,
}

impl WaveFunction {
    /// The zero wavefunction.
    pub fn zeroed(lattice: Lattice, boundary: BoundaryMode) -> Result<Self, DynamicsError> {
        let sites = lattice.site_count()?;
        Ok(WaveFunction {
            lattice,
            boundary,
            amps: vec![Complex64::new(0.0, 0.0); sites],
        })
    }

    /// A delta amplitude at one space point.
    pub fn point(
        lattice: Lattice,
        boundary: BoundaryMode,
        indices: &[u128],
    ) -> Result<Self, DynamicsError> {
        let mut wf = Self::zeroed(lattice, boundary)?;
        let flat = wf.flat_index(indices)?;
        wf.amps[flat] = Complex64::new(1.0, 0.0);
        Ok(wf)
    }

    /// The normalized plane wave with integer mode numbers `q_z`:
    /// `ψ(l) = exp(i·2π·Σ_z q_z·l_z / M)/√(M^D)`, an exact eigenvector of
    /// the free stencil on a periodic lattice with `κ_z = 2π q_z/(M·Δ)`.
    pub fn plane_wave(
        lattice: Lattice,
        boundary: BoundaryMode,
        modes: &[i64],
    ) -> Result<Self, DynamicsError> {
        if modes.len() != lattice.dims() as usize {
            return Err(DynamicsError::InvalidParameter(format!(
                "{} mode numbers for {} dimensions",
                modes.len(),
                lattice.dims()
            )));
        }
        let m = lattice.points_per_dim()? as f64;
        let sites = lattice.site_count()?;
        let scale = 1.0 / (sites as f64).sqrt();
        let mut wf = Self::zeroed(lattice, boundary)?;
        for (flat, amp) in wf.amps.iter_mut().enumerate() {
            let indices = unflatten(flat, wf.lattice.points_per_dim()?, wf.lattice.dims());
            let mut phase = 0.0;
            for (q, l) in modes.iter().zip(&indices) {
                phase += std::f64::consts::TAU * (*q as f64) * (*l as f64) / m;
            }
            *amp = Complex64::from_polar(scale, phase);
        }
        Ok(wf)
    }

    /// A normalized Gaussian packet centered at `center` (in location
    /// coordinates) with the given width.
    pub fn gaussian(
        lattice: Lattice,
        boundary: BoundaryMode,
        center: &[f64],
        width: f64,
    ) -> Result<Self, DynamicsError> {
        if center.len() != lattice.dims() as usize {
            return Err(DynamicsError::InvalidParameter(format!(
                "{} center coordinates for {} dimensions",
                center.len(),
                lattice.dims()
            )));
        }
        if width <= 0.0 {
            return Err(DynamicsError::InvalidParameter(format!(
                "width must be positive, got {width}"
            )));
        }
        let delta = lattice.spacing().to_f64().unwrap_or(1.0);
        let mut wf = Self::zeroed(lattice, boundary)?;
        let m = wf.lattice.points_per_dim()?;
        for (flat, amp) in wf.amps.iter_mut().enumerate() {
            let indices = unflatten(flat, m, wf.lattice.dims());
            let mut r2 = 0.0;
            for (l, c) in indices.iter().zip(center) {
                let x = *l as f64 * delta;
                r2 += (x - c) * (x - c);
            }
            *amp = Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0);
        }
        let norm = wf.norm_sqr().sqrt();
        if norm > 0.0 {
            for amp in wf.amps.iter_mut() {
                *amp /= norm;
            }
        }
        Ok(wf)
    }

    /// Builds a wavefunction from an arbitrary amplitude function of the
    /// space indices.
    pub fn from_fn<F>(
        lattice: Lattice,
        boundary: BoundaryMode,
        mut f: F,
    ) -> Result<Self, DynamicsError>
    where
        F: FnMut(&[u128]) -> Complex64,
    {
        let mut wf = Self::zeroed(lattice, boundary)?;
        let m = wf.lattice.points_per_dim()?;
        for (flat, amp) in wf.amps.iter_mut().enumerate() {
            let indices = unflatten(flat, m, wf.lattice.dims());
            *amp = f(&indices);
        }
        Ok(wf)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    /// Flat amplitude storage, dimension 0 varying fastest.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amps.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Rescales to unit norm (no-op on the zero state).
    pub fn normalized(&self) -> Self {
        let norm = self.norm_sqr().sqrt();
        let mut out = self.clone();
        if norm > 0.0 {
            for amp in out.amps.iter_mut() {
                *amp /= norm;
            }
        }
        out
    }

    fn flat_index(&self, indices: &[u128]) -> Result<usize, DynamicsError> {
        if indices.len() != self.lattice.dims() as usize {
            return Err(DynamicsError::InvalidParameter(format!(
                "{} indices for {} dimensions",
                indices.len(),
                self.lattice.dims()
            )));
        }
        let m = self.lattice.points_per_dim()?;
        let mut flat: u128 = 0;
        for &l in indices.iter().rev() {
            if l >= m {
                return Err(FrameError::IndexOutOfRange { index: l, bound: m }.into());
            }
            flat = flat * m + l;
        }
        Ok(flat as usize)
    }

    /// Amplitude at a space point.
    pub fn amplitude_at(&self, indices: &[u128]) -> Result<Complex64, DynamicsError> {
        Ok(self.amps[self.flat_index(indices)?])
    }
}

fn unflatten(flat: usize, points_per_dim: u128, dims: u32) -> Vec<u128> {
    let mut rest = flat as u128;
    (0..dims)
        .map(|_| {
            let idx = rest % points_per_dim;
            rest /= points_per_dim;
            idx
        })
        .collect()
}

/// Per-site neighbor table: for each site and dimension, the flat indices
/// of the `+Δ` and `-Δ` neighbors (`None` contributes zero amplitude).
type NeighborTable = Vec<Vec<[Option<usize>; 2]>>;

fn neighbor_table(lattice: &Lattice, boundary: BoundaryMode) -> Result<NeighborTable, DynamicsError> {
    let m = lattice.points_per_dim()?;
    let sites = lattice.site_count()?;
    let dims = lattice.dims() as usize;
    let mut strides = Vec::with_capacity(dims);
    let mut stride: u128 = 1;
    for _ in 0..dims {
        strides.push(stride);
        stride *= m;
    }
    let mut table = Vec::with_capacity(sites);
    for flat in 0..sites {
        let indices = unflatten(flat, m, lattice.dims());
        let mut per_dim = Vec::with_capacity(dims);
        for z in 0..dims {
            let l = indices[z];
            let fwd = if l + 1 < m {
                Some(flat + strides[z] as usize)
            } else {
                match boundary {
                    BoundaryMode::Periodic => Some(flat - (l * strides[z]) as usize),
                    BoundaryMode::FixedZero => None,
                }
            };
            let bwd = if l > 0 {
                Some(flat - strides[z] as usize)
            } else {
                match boundary {
                    BoundaryMode::Periodic => Some(flat + ((m - 1) * strides[z]) as usize),
                    BoundaryMode::FixedZero => None,
                }
            };
            per_dim.push([fwd, bwd]);
        }
        table.push(per_dim);
    }
    Ok(table)
}

// ----------------------------------------------------------------------
// Hamiltonians.
// ----------------------------------------------------------------------

/// A single-particle potential over lattice space points.
#[derive(Clone)]
pub enum Potential {
    Zero,
    /// Constant `depth` inside an axis-aligned index box, zero outside.
    Well {
        depth: f64,
        lo: Vec<u128>,
        hi: Vec<u128>,
    },
    /// `½·stiffness·Σ_z (x_z - center_z)²` in location coordinates.
    Harmonic { stiffness: f64, center: Vec<f64> },
    /// Arbitrary function of the location coordinates.
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => f.write_str("Zero"),
            Potential::Well { depth, lo, hi } => f
                .debug_struct("Well")
                .field("depth", depth)
                .field("lo", lo)
                .field("hi", hi)
                .finish(),
            Potential::Harmonic { stiffness, center } => f
                .debug_struct("Harmonic")
                .field("stiffness", stiffness)
                .field("center", center)
                .finish(),
            Potential::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Potential {
    fn value_at(&self, indices: &[u128], delta: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Well { depth, lo, hi } => {
                let inside = indices
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(l, (a, b))| l >= a && l <= b);
                if inside {
                    *depth
                } else {
                    0.0
                }
            }
            Potential::Harmonic { stiffness, center } => {
                let mut r2 = 0.0;
                for (l, c) in indices.iter().zip(center) {
                    let x = *l as f64 * delta;
                    r2 += (x - c) * (x - c);
                }
                0.5 * stiffness * r2
            }
            Potential::Custom(f) => {
                let xs: Vec<f64> = indices.iter().map(|&l| l as f64 * delta).collect();
                f(&xs)
            }
        }
    }

    fn table(&self, lattice: &Lattice) -> Result<Vec<f64>, DynamicsError> {
        let delta = lattice.spacing().to_f64().unwrap_or(1.0);
        let m = lattice.points_per_dim()?;
        let sites = lattice.site_count()?;
        Ok((0..sites)
            .map(|flat| self.value_at(&unflatten(flat, m, lattice.dims()), delta))
            .collect())
    }
}

/// One system's contribution to the Hamiltonian: its kinetic mass, the
/// external potential it feels, and the constant internal-energy shift of
/// its (fixed) internal state under its energy model.
#[derive(Clone)]
pub struct SystemTerm {
    pub mass: f64,
    pub potential: Potential,
    pub internal_model: EnergyModel,
    pub internal_state: Option<NumeralState>,
}

impl fmt::Debug for SystemTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemTerm")
            .field("mass", &self.mass)
            .field("internal_state", &self.internal_state)
            .finish()
    }
}

impl SystemTerm {
    fn internal_energy(&self) -> f64 {
        self.internal_state
            .as_ref()
            .map(|s| self.internal_model.energy_of(s))
            .unwrap_or(0.0)
    }
}

/// Hamiltonian description for one or two hybrid systems on a lattice:
/// per-system kinetic + potential + internal terms, plus an optional
/// interaction of the two internal state labels.
#[derive(Clone)]
pub struct HamiltonianSpec {
    pub hbar: f64,
    systems: Vec<SystemTerm>,
    interaction: Option<Arc<dyn Fn(&NumeralState, &NumeralState) -> f64 + Send + Sync>>,
}

impl fmt::Debug for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSpec")
            .field("hbar", &self.hbar)
            .field("systems", &self.systems)
            .field("interaction", &self.interaction.is_some())
            .finish()
    }
}

impl HamiltonianSpec {
    /// Single free-or-potential system, `ħ = 1`.
    pub fn single(mass: f64, potential: Potential) -> Result<Self, DynamicsError> {
        if mass <= 0.0 {
            return Err(DynamicsError::InvalidParameter(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(HamiltonianSpec {
            hbar: 1.0,
            systems: vec![SystemTerm {
                mass,
                potential,
                internal_model: EnergyModel::magnitude(1.0),
                internal_state: None,
            }],
            interaction: None,
        })
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self, DynamicsError> {
        if hbar <= 0.0 {
            return Err(DynamicsError::InvalidParameter(format!(
                "hbar must be positive, got {hbar}"
            )));
        }
        self.hbar = hbar;
        Ok(self)
    }

    /// Attaches an internal state and model to the (single) system.
    pub fn with_internal(
        mut self,
        model: EnergyModel,
        state: NumeralState,
    ) -> Result<Self, DynamicsError> {
        match self.systems.as_mut_slice() {
            [term] => {
                term.internal_model = model;
                term.internal_state = Some(state);
                Ok(self)
            }
            _ => Err(DynamicsError::InvalidParameter(
                "with_internal applies to single-system Hamiltonians".into(),
            )),
        }
    }

    pub fn systems(&self) -> &[SystemTerm] {
        &self.systems
    }

    /// Total constant shift: internal energies plus the interaction of the
    /// two internal labels (zero when absent).
    pub fn constant_shift(&self) -> f64 {
        let internal: f64 = self.systems.iter().map(SystemTerm::internal_energy).sum();
        let interaction = match (&self.interaction, self.systems.as_slice()) {
            (Some(f), [a, b]) => match (&a.internal_state, &b.internal_state) {
                (Some(sa), Some(sb)) => f(sa, sb),
                _ => 0.0,
            },
            _ => 0.0,
        };
        internal + interaction
    }

    fn single_term(&self) -> Result<&SystemTerm, DynamicsError> {
        match self.systems.as_slice() {
            [term] => Ok(term),
            other => Err(DynamicsError::InvalidParameter(format!(
                "expected a single-system Hamiltonian, found {} systems",
                other.len()
            ))),
        }
    }
}

/// Everything a dynamics run needs for one hybrid system: where it lives,
/// its physical parameters, and its internal state.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub system: HybridSystem,
    pub lattice: Lattice,
    pub potential: Potential,
    pub internal_state: NumeralState,
}

/// Composes the two-system Hamiltonian `H = H_{0,1} + H_{0,2} + H_int`:
/// each `H_{0,i}` is that system's kinetic stencil plus its internal energy
/// term; the interaction defaults to zero when absent.
pub fn two_system_hamiltonian(
    a: &SystemSpec,
    b: &SystemSpec,
    interaction: Option<Arc<dyn Fn(&NumeralState, &NumeralState) -> f64 + Send + Sync>>,
) -> Result<HamiltonianSpec, DynamicsError> {
    if a.lattice != b.lattice {
        return Err(DynamicsError::LatticeMismatch(format!(
            "system lattices differ: {:?} vs {:?}",
            a.lattice, b.lattice
        )));
    }
    Ok(HamiltonianSpec {
        hbar: 1.0,
        systems: vec![
            SystemTerm {
                mass: a.system.mass,
                potential: a.potential.clone(),
                internal_model: a.system.energy_model.clone(),
                internal_state: Some(a.internal_state.clone()),
            },
            SystemTerm {
                mass: b.system.mass,
                potential: b.potential.clone(),
                internal_model: b.system.energy_model.clone(),
                internal_state: Some(b.internal_state.clone()),
            },
        ],
        interaction,
    })
}

// ----------------------------------------------------------------------
// Single-system evolution.
// ----------------------------------------------------------------------

/// The forward-backward composite second difference at one point:
/// `Σ_z [ψ(x+Δe_z) - 2ψ(x) + ψ(x-Δe_z)]/Δ²` with neighbors resolved by the
/// boundary mode.
pub fn laplacian_fb(psi: &WaveFunction, indices: &[u128]) -> Result<Complex64, DynamicsError> {
    let flat = psi.flat_index(indices)?;
    let table = neighbor_table(psi.lattice(), psi.boundary())?;
    let delta = psi.lattice().spacing().to_f64().unwrap_or(1.0);
    Ok(laplacian_at(&psi.amps, &table, flat) / (delta * delta))
}

fn laplacian_at(amps: &[Complex64], table: &NeighborTable, flat: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for pair in &table[flat] {
        let fwd = pair[0].map(|i| amps[i]).unwrap_or_default();
        let bwd = pair[1].map(|i| amps[i]).unwrap_or_default();
        acc += fwd - 2.0 * amps[flat] + bwd;
    }
    acc
}

struct Kernel {
    table: NeighborTable,
    potential: Vec<f64>,
    /// `-ħ²/(2mΔ²)`, multiplying the raw stencil.
    kinetic: f64,
    /// Constant internal + interaction shift added to the potential.
    shift: f64,
    hbar: f64,
}

impl Kernel {
    fn build(
        lattice: &Lattice,
        boundary: BoundaryMode,
        spec: &HamiltonianSpec,
    ) -> Result<Self, DynamicsError> {
        let term = spec.single_term()?;
        let delta = lattice.spacing().to_f64().unwrap_or(1.0);
        Ok(Kernel {
            table: neighbor_table(lattice, boundary)?,
            potential: term.potential.table(lattice)?,
            kinetic: -spec.hbar * spec.hbar / (2.0 * term.mass * delta * delta),
            shift: spec.constant_shift(),
            hbar: spec.hbar,
        })
    }

    /// `Hψ` over the whole slice.
    fn apply(&self, amps: &[Complex64]) -> Vec<Complex64> {
        (0..amps.len())
            .map(|flat| {
                self.kinetic * laplacian_at(amps, &self.table, flat)
                    + (self.potential[flat] + self.shift) * amps[flat]
            })
            .collect()
    }

    /// One explicit step `ψ' = ψ - (i·Δt/ħ)·Hψ`.
    fn step(&self, amps: &[Complex64], dt: f64) -> Vec<Complex64> {
        let h = self.apply(amps);
        let factor = Complex64::new(0.0, -dt / self.hbar);
        amps.iter()
            .zip(&h)
            .map(|(a, ha)| a + factor * ha)
            .collect()
    }

    fn energy_expectation(&self, amps: &[Complex64]) -> f64 {
        let h = self.apply(amps);
        let num: Complex64 = amps
            .iter()
            .zip(&h)
            .map(|(a, ha)| a.conj() * ha)
            .sum();
        let den: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if den == 0.0 {
            0.0
        } else {
            num.re / den
        }
    }
}

/// `Hψ` as a wavefunction.
pub fn apply_hamiltonian(
    psi: &WaveFunction,
    spec: &HamiltonianSpec,
) -> Result<WaveFunction, DynamicsError> {
    let kernel = Kernel::build(psi.lattice(), psi.boundary(), spec)?;
    Ok(WaveFunction {
        lattice: psi.lattice.clone(),
        boundary: psi.boundary,
        amps: kernel.apply(&psi.amps),
    })
}

/// One explicit forward-difference step. Deliberately non-unitary: the
/// squared norm grows by exactly `(Δt/ħ)²·‖Hψ‖²`.
pub fn schrodinger_step(
    psi: &WaveFunction,
    spec: &HamiltonianSpec,
    dt: f64,
) -> Result<WaveFunction, DynamicsError> {
    if dt <= 0.0 {
        return Err(DynamicsError::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let kernel = Kernel::build(psi.lattice(), psi.boundary(), spec)?;
    Ok(WaveFunction {
        lattice: psi.lattice.clone(),
        boundary: psi.boundary,
        amps: kernel.step(&psi.amps, dt),
    })
}

/// Per-step observables along a trajectory. `h_norm_sqr` is `‖Hψ‖²` of the
/// recorded state, so the explicit-step norm identity can be read off:
/// `norm_sqr[i+1] - norm_sqr[i] = (Δt/ħ)²·h_norm_sqr[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub norm_sqr: f64,
    pub energy: f64,
    pub max_amplitude: f64,
    pub h_norm_sqr: f64,
}

/// A recorded evolution: diagnostics for states `0..=n_steps`, and the
/// states themselves when requested.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub diagnostics: Vec<StepDiagnostics>,
    pub states: Vec<WaveFunction>,
}

impl Trajectory {
    pub fn final_state(&self) -> &WaveFunction {
        self.states.last().expect("trajectories record all states")
    }
}

/// Repeated explicit stepping with per-step diagnostics. All intermediate
/// states are recorded (desk-scale lattices).
pub fn evolve(
    psi0: &WaveFunction,
    spec: &HamiltonianSpec,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory, DynamicsError> {
    if dt <= 0.0 {
        return Err(DynamicsError::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let kernel = Kernel::build(psi0.lattice(), psi0.boundary(), spec)?;
    evolve_with_kernel(psi0, &kernel, dt, n_steps)
}

fn evolve_with_kernel(
    psi0: &WaveFunction,
    kernel: &Kernel,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory, DynamicsError> {
    let mut amps = psi0.amps.clone();
    let mut diagnostics = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        let h = kernel.apply(&amps);
        let wf = WaveFunction {
            lattice: psi0.lattice.clone(),
            boundary: psi0.boundary,
            amps: amps.clone(),
        };
        diagnostics.push(StepDiagnostics {
            step,
            norm_sqr: wf.norm_sqr(),
            energy: kernel.energy_expectation(&amps),
            max_amplitude: wf.max_amplitude(),
            h_norm_sqr: h.iter().map(|a| a.norm_sqr()).sum(),
        });
        states.push(wf);
        if step < n_steps {
            let factor = Complex64::new(0.0, -dt / kernel.hbar);
            amps = amps
                .iter()
                .zip(&h)
                .map(|(a, ha)| a + factor * ha)
                .collect();
        }
    }
    Ok(Trajectory {
        diagnostics,
        states,
    })
}

/// The dense eigendecomposition propagator `exp(-i·H·Δt/ħ)` applied
/// stepwise: the exact unitary reference the explicit scheme is compared
/// against. Only for lattices at or below the site cap.
pub fn unitary_reference(
    psi0: &WaveFunction,
    spec: &HamiltonianSpec,
    dt: f64,
    n_steps: usize,
    site_cap: Option<usize>,
) -> Result<Trajectory, DynamicsError> {
    let cap = site_cap.unwrap_or(DEFAULT_UNITARY_SITE_CAP);
    let sites = psi0.lattice().site_count()?;
    if sites > cap {
        return Err(DynamicsError::LatticeTooLarge { sites, cap });
    }
    let kernel = Kernel::build(psi0.lattice(), psi0.boundary(), spec)?;
    let matrix = dense_matrix(&kernel, sites);
    let eigen = SymmetricEigen::new(matrix);
    // Column q of `eigenvectors` is the q-th orthonormal eigenvector.
    let q = eigen.eigenvectors;
    let phases: Vec<Complex64> = eigen
        .eigenvalues
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e * dt / kernel.hbar))
        .collect();

    let mut amps = psi0.amps.clone();
    let mut diagnostics = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    for step in 0..=n_steps {
        let wf = WaveFunction {
            lattice: psi0.lattice.clone(),
            boundary: psi0.boundary,
            amps: amps.clone(),
        };
        let h = kernel.apply(&amps);
        diagnostics.push(StepDiagnostics {
            step,
            norm_sqr: wf.norm_sqr(),
            energy: kernel.energy_expectation(&amps),
            max_amplitude: wf.max_amplitude(),
            h_norm_sqr: h.iter().map(|a| a.norm_sqr()).sum(),
        });
        states.push(wf);
        if step < n_steps {
            // ψ' = Q·diag(phase)·Qᵀ·ψ.
            let mut modal = vec![Complex64::new(0.0, 0.0); sites];
            for (qi, mode) in modal.iter_mut().enumerate() {
                for (j, amp) in amps.iter().enumerate() {
                    *mode += q[(j, qi)] * amp;
                }
                *mode *= phases[qi];
            }
            let mut next = vec![Complex64::new(0.0, 0.0); sites];
            for (j, out) in next.iter_mut().enumerate() {
                for (qi, mode) in modal.iter().enumerate() {
                    *out += q[(j, qi)] * mode;
                }
            }
            amps = next;
        }
    }
    Ok(Trajectory {
        diagnostics,
        states,
    })
}

fn dense_matrix(kernel: &Kernel, sites: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(sites, sites);
    for flat in 0..sites {
        for pair in &kernel.table[flat] {
            h[(flat, flat)] += -2.0 * kernel.kinetic;
            if let Some(f) = pair[0] {
                h[(flat, f)] += kernel.kinetic;
            }
            if let Some(b) = pair[1] {
                h[(flat, b)] += kernel.kinetic;
            }
        }
        h[(flat, flat)] += kernel.potential[flat] + kernel.shift;
    }
    h
}

// ----------------------------------------------------------------------
// Image-labeled evolution.
// ----------------------------------------------------------------------

/// A trajectory whose sites are keyed by parent-frame hybrid-state tuples.
/// The amplitudes are bitwise identical to the index-labeled [`evolve`]
/// output: the relabeling changes bookkeeping, not arithmetic.
#[derive(Debug, Clone)]
pub struct ImageTrajectory {
    /// Per-site space-component labels, aligned with the flat amplitude
    /// order of the underlying trajectory.
    pub site_labels: Vec<Vec<NumeralState>>,
    pub trajectory: Trajectory,
}

/// Evolves with sites labeled by their parent-frame images, resolving
/// neighbor access through ulp successor arithmetic on the component
/// states (`s_x ±_A 1` steps by one lattice spacing). The successor-derived
/// neighbor table must agree with the index-derived one; any disagreement
/// reports `ImageMismatch`. The arithmetic path is then shared with
/// [`evolve`], so amplitudes agree bit for bit.
pub fn image_evolution(
    psi0: &WaveFunction,
    spec: &HamiltonianSpec,
    dt: f64,
    n_steps: usize,
    image: &LatticeImage,
) -> Result<ImageTrajectory, DynamicsError> {
    if image.lattice() != psi0.lattice() {
        return Err(DynamicsError::ImageMismatch(
            "image map was generated from a different lattice".into(),
        ));
    }
    let lattice = psi0.lattice();
    let kernel = Kernel::build(lattice, psi0.boundary(), spec)?;
    let m = lattice.points_per_dim()?;
    let sites = lattice.site_count()?;
    let dims = lattice.dims() as usize;
    let mut strides = Vec::with_capacity(dims);
    let mut stride: u128 = 1;
    for _ in 0..dims {
        strides.push(stride);
        stride *= m;
    }

    let mut site_labels = Vec::with_capacity(sites);
    for flat in 0..sites {
        let indices = unflatten(flat, m, lattice.dims());
        let labels: Vec<NumeralState> = indices
            .iter()
            .map(|&l| image.component_state(l))
            .collect::<Result<_, _>>()?;
        // Cross-check the kernel's neighbor table against successor
        // arithmetic on the hybrid-state labels.
        for (z, label) in labels.iter().enumerate() {
            let expect = |state: NumeralState, wrapped_to: u128| -> Result<Option<usize>, DynamicsError> {
                let grew = state.len() != label.len();
                let negative = state.sign() == Sign::Minus && !state.is_zero_value();
                if grew || negative {
                    // Stepped off the lattice edge.
                    return Ok(match psi0.boundary() {
                        BoundaryMode::Periodic => Some(
                            (flat as u128 - indices[z] * strides[z]
                                + wrapped_to * strides[z]) as usize,
                        ),
                        BoundaryMode::FixedZero => None,
                    });
                }
                let l = image.component_index(&state)?;
                Ok(Some(
                    (flat as u128 - indices[z] * strides[z] + l * strides[z]) as usize,
                ))
            };
            let fwd = expect(label.succ_ulp(), 0)?;
            let bwd = expect(label.pred_ulp(), m - 1)?;
            if kernel.table[flat][z] != [fwd, bwd] {
                return Err(DynamicsError::ImageMismatch(format!(
                    "successor arithmetic and index arithmetic disagree at site {flat}, dimension {z}"
                )));
            }
        }
        site_labels.push(labels);
    }

    let trajectory = evolve_with_kernel(psi0, &kernel, dt, n_steps)?;
    Ok(ImageTrajectory {
        site_labels,
        trajectory,
    })
}

// ----------------------------------------------------------------------
// Two-system states.
// ----------------------------------------------------------------------

/// A wavefunction over pairs of space points of one lattice: the state of
/// two hybrid systems. Index `(x1, x2)` is stored at `x1 + sites·x2`.
#[derive(Debug, Clone)]
pub struct TwoSystemWaveFunction {
    lattice: Lattice,
    boundary: BoundaryMode,
    amps: Vec<Complex64>,
}

impl TwoSystemWaveFunction {
    /// The product state `ψ_a ⊗ ψ_b`.
    pub fn product(a: &WaveFunction, b: &WaveFunction) -> Result<Self, DynamicsError> {
        if a.lattice() != b.lattice() || a.boundary() != b.boundary() {
            return Err(DynamicsError::LatticeMismatch(
                "product factors live on different lattices".into(),
            ));
        }
        let n = a.amps.len();
        let mut amps = vec![Complex64::new(0.0, 0.0); n * n];
        for x2 in 0..n {
            for x1 in 0..n {
                amps[x1 + n * x2] = a.amps[x1] * b.amps[x2];
            }
        }
        Ok(TwoSystemWaveFunction {
            lattice: a.lattice.clone(),
            boundary: a.boundary,
            amps,
        })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn kernels(&self, spec: &HamiltonianSpec) -> Result<[Kernel; 2], DynamicsError> {
        let terms = spec.systems();
        if terms.len() != 2 {
            return Err(DynamicsError::InvalidParameter(format!(
                "two-system state needs a two-system Hamiltonian, found {}",
                terms.len()
            )));
        }
        let delta = self.lattice.spacing().to_f64().unwrap_or(1.0);
        let build = |term: &SystemTerm| -> Result<Kernel, DynamicsError> {
            Ok(Kernel {
                table: neighbor_table(&self.lattice, self.boundary)?,
                potential: term.potential.table(&self.lattice)?,
                kinetic: -spec.hbar * spec.hbar / (2.0 * term.mass * delta * delta),
                shift: 0.0,
                hbar: spec.hbar,
            })
        };
        Ok([build(&terms[0])?, build(&terms[1])?])
    }

    /// `Hψ` for the composite Hamiltonian.
    pub fn apply_hamiltonian(
        &self,
        spec: &HamiltonianSpec,
    ) -> Result<TwoSystemWaveFunction, DynamicsError> {
        let [k1, k2] = self.kernels(spec)?;
        let n = k1.table.len();
        let shift = spec.constant_shift();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        // System 1 acts on x1 slices, system 2 on x2 slices.
        for x2 in 0..n {
            let row: Vec<Complex64> = (0..n).map(|x1| self.amps[x1 + n * x2]).collect();
            let h = k1.apply(&row);
            for x1 in 0..n {
                out[x1 + n * x2] += h[x1];
            }
        }
        for x1 in 0..n {
            let col: Vec<Complex64> = (0..n).map(|x2| self.amps[x1 + n * x2]).collect();
            let h = k2.apply(&col);
            for x2 in 0..n {
                out[x1 + n * x2] += h[x2];
            }
        }
        for (o, a) in out.iter_mut().zip(&self.amps) {
            *o += shift * a;
        }
        Ok(TwoSystemWaveFunction {
            lattice: self.lattice.clone(),
            boundary: self.boundary,
            amps: out,
        })
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn energy_expectation(&self, spec: &HamiltonianSpec) -> Result<f64, DynamicsError> {
        let h = self.apply_hamiltonian(spec)?;
        let num: Complex64 = self
            .amps
            .iter()
            .zip(&h.amps)
            .map(|(a, ha)| a.conj() * ha)
            .sum();
        let den = self.norm_sqr();
        Ok(if den == 0.0 { 0.0 } else { num.re / den })
    }

    /// One explicit step of the pair state.
    pub fn schrodinger_step(
        &self,
        spec: &HamiltonianSpec,
        dt: f64,
    ) -> Result<TwoSystemWaveFunction, DynamicsError> {
        let h = self.apply_hamiltonian(spec)?;
        let factor = Complex64::new(0.0, -dt / spec.hbar);
        let amps = self
            .amps
            .iter()
            .zip(&h.amps)
            .map(|(a, ha)| a + factor * ha)
            .collect();
        Ok(TwoSystemWaveFunction {
            lattice: self.lattice.clone(),
            boundary: self.boundary,
            amps,
        })
    }

    /// The dense composite Hamiltonian matrix (for spectra on tiny
    /// lattices).
    pub fn dense_matrix(&self, spec: &HamiltonianSpec) -> Result<DMatrix<f64>, DynamicsError> {
        let [k1, k2] = self.kernels(spec)?;
        let n = k1.table.len();
        let shift = spec.constant_shift();
        let h1 = dense_matrix(&k1, n);
        let h2 = dense_matrix(&k2, n);
        let total = n * n;
        let mut h = DMatrix::zeros(total, total);
        for x2 in 0..n {
            for x1 in 0..n {
                let row = x1 + n * x2;
                for y1 in 0..n {
                    h[(row, y1 + n * x2)] += h1[(x1, y1)];
                }
                for y2 in 0..n {
                    h[(row, x1 + n * y2)] += h2[(x2, y2)];
                }
                h[(row, row)] += shift;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{make_lattice, parent_image_lattice, FrameId, LatticePoint};
    use crate::numeral::rational;

    fn frame(base: u32) -> FrameId {
        FrameId::new(1, base, "g0").unwrap()
    }

    fn s(text: &str, base: u32) -> NumeralState {
        NumeralState::parse_compact(text, base).unwrap()
    }

    #[test]
    fn energy_respects_trim_rule() {
        let model = EnergyModel::magnitude(1.0);
        let padded = s("013-470", 10);
        let trimmed = s("13-47", 10);
        assert_eq!(model.energy_of(&padded), model.energy_of(&trimmed));
        assert!((model.energy_of(&trimmed) - 13.47).abs() < 1e-12);
        assert_eq!(model.energy_of(&NumeralState::zero(10).unwrap()), 0.0);
        let digit = EnergyModel::digit_sum(1.0);
        assert_eq!(digit.energy_of(&s("100+111", 2)), 4.0);
    }

    #[test]
    fn energy_sequences_probe_the_open_question() {
        let seq = NumeralSequence::truncation(&rational(1, 3), 2).unwrap();
        let magnitude = energy_sequence(&seq, &EnergyModel::magnitude(1.0), 16, 2f64.powi(-10))
            .unwrap();
        assert_eq!(magnitude.flag, ConvergenceFlag::Convergent);
        assert!((magnitude.energies[16] - 1.0 / 3.0).abs() < 1e-4);

        let digits = energy_sequence(&seq, &EnergyModel::digit_sum(1.0), 16, 2f64.powi(-10))
            .unwrap();
        assert_eq!(digits.flag, ConvergenceFlag::Divergent);
        assert!(digits
            .energies
            .windows(2)
            .all(|w| w[0] <= w[1]));
        assert_eq!(digits.energies[16], 8.0);

        let constant = NumeralSequence::constant(s("13-47", 10));
        let report = energy_sequence(&constant, &EnergyModel::magnitude(1.0), 8, 1e-12).unwrap();
        assert_eq!(report.flag, ConvergenceFlag::Convergent);
        assert_eq!(report.tail_spread, 0.0);
    }

    #[test]
    fn tuple_energy_is_additive_and_h_independent() {
        let lat = make_lattice(frame(2), 2, 2, 2).unwrap();
        let image = parent_image_lattice(&lat);
        // Components valued 1/2 and 3/4: indices 2 and 3 at Δ = 1/4.
        let tuple = image.image_of(&LatticePoint::new(vec![2, 3], 0)).unwrap();
        let model = EnergyModel::magnitude(1.0);
        let total = tuple_energy(&tuple, &model);
        assert!((total - 1.25).abs() < 1e-12);
        // Swapping which component holds which value keeps the sum.
        let swapped = image.image_of(&LatticePoint::new(vec![3, 2], 0)).unwrap();
        assert_eq!(total, tuple_energy(&swapped, &model));
        // Origin tuple has zero energy.
        let origin = image.image_of(&LatticePoint::new(vec![0, 0], 0)).unwrap();
        assert_eq!(tuple_energy(&origin, &model), 0.0);
    }

    #[test]
    fn laplacian_of_constant_and_spike() {
        let lat = make_lattice(frame(2), 3, 0, 1).unwrap();
        let constant = WaveFunction::from_fn(lat.clone(), BoundaryMode::Periodic, |_| {
            Complex64::new(1.0, 0.0)
        })
        .unwrap();
        for l in 0..8u128 {
            assert_eq!(
                laplacian_fb(&constant, &[l]).unwrap(),
                Complex64::new(0.0, 0.0)
            );
        }
        let spike = WaveFunction::point(lat, BoundaryMode::Periodic, &[3]).unwrap();
        assert_eq!(
            laplacian_fb(&spike, &[3]).unwrap(),
            Complex64::new(-2.0, 0.0)
        );
        assert_eq!(
            laplacian_fb(&spike, &[2]).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        assert_eq!(
            laplacian_fb(&spike, &[4]).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        assert_eq!(
            laplacian_fb(&spike, &[5]).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn plane_waves_are_stencil_eigenvectors() {
        let lat = make_lattice(frame(2), 4, 0, 1).unwrap();
        let m = 16.0;
        for q in 0..16i64 {
            let wave =
                WaveFunction::plane_wave(lat.clone(), BoundaryMode::Periodic, &[q]).unwrap();
            let kappa = std::f64::consts::TAU * q as f64 / m;
            let expected = -(2.0 - 2.0 * kappa.cos());
            for l in [0u128, 5, 11] {
                let lap = laplacian_fb(&wave, &[l]).unwrap();
                let ratio = lap / wave.amplitude_at(&[l]).unwrap();
                assert!(
                    (ratio.re - expected).abs() < 1e-10 && ratio.im.abs() < 1e-10,
                    "q={q}: got {ratio}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn null_energy_state_is_stationary() {
        let lat = make_lattice(frame(2), 3, 0, 1).unwrap();
        let psi = WaveFunction::from_fn(lat, BoundaryMode::Periodic, |_| {
            Complex64::new(0.25, 0.0)
        })
        .unwrap();
        let spec = HamiltonianSpec::single(1.0, Potential::Zero).unwrap();
        let next = schrodinger_step(&psi, &spec, 0.05).unwrap();
        for (a, b) in psi.amplitudes().iter().zip(next.amplitudes()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn plane_wave_step_multiplies_by_expected_factor() {
        let lat = make_lattice(frame(2), 4, 0, 1).unwrap();
        let spec = HamiltonianSpec::single(1.0, Potential::Zero).unwrap();
        let q = 3i64;
        let psi = WaveFunction::plane_wave(lat, BoundaryMode::Periodic, &[q]).unwrap();
        let dt = 0.01;
        let kappa = std::f64::consts::TAU * q as f64 / 16.0;
        let energy = 2.0 * (kappa / 2.0).sin().powi(2);
        let factor = Complex64::new(1.0, -dt * energy);
        let next = schrodinger_step(&psi, &spec, dt).unwrap();
        for (a, b) in psi.amplitudes().iter().zip(next.amplitudes()) {
            assert!((a * factor - b).norm() < 1e-14);
        }
    }

    #[test]
    fn explicit_step_norm_identity() {
        let lat = make_lattice(frame(2), 4, 1, 1).unwrap();
        let spec = HamiltonianSpec::single(0.7, Potential::Harmonic {
            stiffness: 0.3,
            center: vec![4.0],
        })
        .unwrap();
        let psi = WaveFunction::gaussian(lat, BoundaryMode::FixedZero, &[3.5], 1.2).unwrap();
        let dt = 0.02;
        let traj = evolve(&psi, &spec, dt, 50).unwrap();
        for w in traj.diagnostics.windows(2) {
            let predicted = w[0].norm_sqr + dt * dt * w[0].h_norm_sqr;
            let got = w[1].norm_sqr;
            assert!(
                ((got - predicted) / got).abs() < 1e-12,
                "step {}: {} vs {}",
                w[0].step,
                got,
                predicted
            );
        }
    }

    #[test]
    fn unitary_reference_conserves_norm_and_energy() {
        let lat = make_lattice(frame(2), 3, 0, 1).unwrap();
        let spec = HamiltonianSpec::single(1.0, Potential::Zero).unwrap();
        let psi = WaveFunction::gaussian(lat, BoundaryMode::Periodic, &[3.0], 1.0).unwrap();
        let traj = unitary_reference(&psi, &spec, 0.1, 100, None).unwrap();
        for d in &traj.diagnostics {
            assert!((d.norm_sqr - 1.0).abs() < 1e-10, "step {}", d.step);
            assert!((d.energy - traj.diagnostics[0].energy).abs() < 1e-9);
        }
    }

    #[test]
    fn unitary_reference_respects_site_cap() {
        let lat = make_lattice(frame(2), 4, 0, 1).unwrap();
        let spec = HamiltonianSpec::single(1.0, Potential::Zero).unwrap();
        let psi = WaveFunction::point(lat, BoundaryMode::Periodic, &[0]).unwrap();
        let err = unitary_reference(&psi, &spec, 0.1, 1, Some(8)).unwrap_err();
        assert_eq!(err.name(), "LatticeTooLarge");
    }

    #[test]
    fn explicit_scheme_approaches_unitary_as_dt_shrinks() {
        let lat = make_lattice(frame(2), 3, 0, 1).unwrap();
        let spec = HamiltonianSpec::single(1.0, Potential::Zero).unwrap();
        let psi = WaveFunction::point(lat, BoundaryMode::Periodic, &[2]).unwrap();
        let total_time = 0.8;
        let mut errors = Vec::new();
        for halvings in 0..3 {
            let steps = 8usize << halvings;
            let dt = total_time / steps as f64;
            let explicit = evolve(&psi, &spec, dt, steps).unwrap();
            let exact = unitary_reference(&psi, &spec, dt, steps, None).unwrap();
            let err: f64 = explicit
                .final_state()
                .amplitudes()
                .iter()
                .zip(exact.final_state().amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            errors.push(err);
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > 1.7 && ratio < 2.7,
                "first-order contraction expected, got {ratio}"
            );
        }
    }

    #[test]
    fn image_evolution_matches_bitwise() {
        let lat = make_lattice(frame(2), 3, 3, 1).unwrap();
        let image = parent_image_lattice(&lat);
        let spec = HamiltonianSpec::single(1.0, Potential::Zero).unwrap();
        for boundary in [BoundaryMode::Periodic, BoundaryMode::FixedZero] {
            let psi = WaveFunction::gaussian(lat.clone(), boundary, &[0.5], 0.25).unwrap();
            let direct = evolve(&psi, &spec, 0.05, 20).unwrap();
            let imaged = image_evolution(&psi, &spec, 0.05, 20, &image).unwrap();
            for (a, b) in direct.states.iter().zip(&imaged.trajectory.states) {
                for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                    assert_eq!(x.re.to_bits(), y.re.to_bits());
                    assert_eq!(x.im.to_bits(), y.im.to_bits());
                }
            }
            // Labels carry the lattice's exact shape.
            for labels in &imaged.site_labels {
                assert_eq!(labels.len(), 1);
                assert_eq!(labels[0].len(), 3);
                assert_eq!(labels[0].point(), 3);
            }
        }
    }

    #[test]
    fn image_neighbor_example_from_successor() {
        // |100+111⟩ + one ulp = |101+000⟩: the +x neighbor.
        let lat = make_lattice(frame(2), 6, 3, 1).unwrap();
        let image = parent_image_lattice(&lat);
        let label = s("100+111", 2);
        let idx = image.component_index(&label).unwrap();
        let neighbor = image.component_state(idx + 1).unwrap();
        assert_eq!(label.succ_ulp(), neighbor);
        assert_eq!(neighbor, s("101+000", 2));
    }

    #[test]
    fn image_mismatch_is_detected() {
        let lat = make_lattice(frame(2), 3, 3, 1).unwrap();
        let other = make_lattice(frame(2), 3, 2, 1).unwrap();
        let image = parent_image_lattice(&other);
        let spec = HamiltonianSpec::single(1.0, Potential::Zero).unwrap();
        let psi = WaveFunction::point(lat, BoundaryMode::Periodic, &[0]).unwrap();
        let err = image_evolution(&psi, &spec, 0.1, 1, &image).unwrap_err();
        assert_eq!(err.name(), "ImageMismatch");
    }

    fn spec_pair(lat: &Lattice) -> (SystemSpec, SystemSpec) {
        let sys = |label: &str, mass: f64, state: &str| SystemSpec {
            system: HybridSystem::new(
                1,
                2,
                lat.len(),
                lat.point(),
                label,
                mass,
                EnergyModel::magnitude(1.0),
            )
            .unwrap(),
            lattice: lat.clone(),
            potential: Potential::Zero,
            internal_state: s(state, 2),
        };
        (sys("h1", 1.0, "11+"), sys("h2", 2.0, "101+"))
    }

    #[test]
    fn two_system_energy_is_additive_without_interaction() {
        let lat = make_lattice(frame(2), 2, 0, 1).unwrap();
        let (sa, sb) = spec_pair(&lat);
        let h2 = two_system_hamiltonian(&sa, &sb, None).unwrap();

        let psi_a = WaveFunction::gaussian(lat.clone(), BoundaryMode::Periodic, &[1.0], 0.8)
            .unwrap();
        let psi_b = WaveFunction::plane_wave(lat.clone(), BoundaryMode::Periodic, &[1]).unwrap();
        let pair = TwoSystemWaveFunction::product(&psi_a, &psi_b).unwrap();
        let joint = pair.energy_expectation(&h2).unwrap();

        let single_a = HamiltonianSpec::single(sa.system.mass, Potential::Zero)
            .unwrap()
            .with_internal(EnergyModel::magnitude(1.0), sa.internal_state.clone())
            .unwrap();
        let single_b = HamiltonianSpec::single(sb.system.mass, Potential::Zero)
            .unwrap()
            .with_internal(EnergyModel::magnitude(1.0), sb.internal_state.clone())
            .unwrap();
        let ka = Kernel::build(&lat, BoundaryMode::Periodic, &single_a).unwrap();
        let kb = Kernel::build(&lat, BoundaryMode::Periodic, &single_b).unwrap();
        let ea = ka.energy_expectation(psi_a.amplitudes());
        let eb = kb.energy_expectation(psi_b.amplitudes());
        assert!(
            (joint - ea - eb).abs() < 1e-10,
            "additivity: {joint} vs {ea} + {eb}"
        );
        // Internal contributions are the magnitudes 3 and 5.
        assert!((h2.constant_shift() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn two_system_spectrum_ignores_label_swap() {
        let lat = make_lattice(frame(2), 2, 0, 1).unwrap();
        let (sa, sb) = spec_pair(&lat);
        let h_ab = two_system_hamiltonian(&sa, &sb, None).unwrap();
        let h_ba = two_system_hamiltonian(&sb, &sa, None).unwrap();
        let psi = TwoSystemWaveFunction::product(
            &WaveFunction::point(lat.clone(), BoundaryMode::Periodic, &[0]).unwrap(),
            &WaveFunction::point(lat, BoundaryMode::Periodic, &[1]).unwrap(),
        )
        .unwrap();
        let eig = |h: &HamiltonianSpec| {
            let m = psi.dense_matrix(h).unwrap();
            let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
            ev.sort_by(f64::total_cmp);
            ev
        };
        let ea = eig(&h_ab);
        let eb = eig(&h_ba);
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn two_system_interaction_shifts_energy() {
        let lat = make_lattice(frame(2), 2, 0, 1).unwrap();
        let (sa, sb) = spec_pair(&lat);
        let coupled = two_system_hamiltonian(
            &sa,
            &sb,
            Some(Arc::new(|x: &NumeralState, y: &NumeralState| {
                // Toy interaction: product of digit sums.
                let ds = |s: &NumeralState| s.digits().iter().sum::<u32>() as f64;
                0.5 * ds(x) * ds(y)
            })),
        )
        .unwrap();
        // digit sums: 2 and 2 → interaction 2; internals 3 + 5.
        assert!((coupled.constant_shift() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_system_requires_shared_lattice() {
        let lat_a = make_lattice(frame(2), 2, 0, 1).unwrap();
        let lat_b = make_lattice(frame(2), 3, 0, 1).unwrap();
        let (sa, _) = spec_pair(&lat_a);
        let (_, sb) = spec_pair(&lat_b);
        assert_eq!(
            two_system_hamiltonian(&sa, &sb, None).unwrap_err().name(),
            "LatticeMismatch"
        );
    }
}
