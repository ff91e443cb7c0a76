//! The iterated reference-frame field and its space-time lattices.
//!
//! Frames are indexed by iteration stage `j`, numeral base `k` and an opaque
//! gauge label `g`. A [`FrameGraph`] fixes the stage topology (finite chain,
//! one- or two-way infinite, or cyclic) and answers the visibility question:
//! observers see their own stage and descendants, never ancestors — except
//! in cyclic fields, where every frame is both.
//!
//! Each frame carries lattices [`Lattice`] with `M = k^L` points per
//! dimension at spacing `Δ = k^{-m}`, so every point location `l·Δ` is a
//! base-`k` rational. [`LatticeImage`] realizes the parent-frame view of a
//! lattice: each space point becomes a `D`-tuple of hybrid-system states,
//! the unique numeral states with exactly the lattice's `L` and `m` whose
//! values are the point's coordinates. No trimming is applied — the fixed
//! padding is what makes the image map a bijection.

use std::collections::BTreeSet;

use num::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cauchy::{self, CauchyError, RealRep};
use crate::numeral::{NumeralError, NumeralState, RationalValue, Sign};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("InvalidSpacing: point position {point} exceeds length {len}")]
    InvalidSpacing { len: u32, point: u32 },
    #[error("InvalidDimension: lattice needs at least one space dimension")]
    InvalidDimension,
    #[error("IndexOutOfRange: index {index} not below {bound}")]
    IndexOutOfRange { index: u128, bound: u128 },
    #[error("UnknownFrame: {0} is not registered")]
    UnknownFrame(String),
    #[error("InvalidTopology: {0}")]
    InvalidTopology(String),
    #[error("LatticeTooLarge: {0}")]
    LatticeTooLarge(String),
    #[error("ImageMismatch: {0}")]
    ImageMismatch(String),
    #[error(transparent)]
    Numeral(#[from] NumeralError),
    #[error(transparent)]
    Cauchy(#[from] CauchyError),
}

impl FrameError {
    pub fn name(&self) -> &'static str {
        match self {
            FrameError::InvalidSpacing { .. } => "InvalidSpacing",
            FrameError::InvalidDimension => "InvalidDimension",
            FrameError::IndexOutOfRange { .. } => "IndexOutOfRange",
            FrameError::UnknownFrame(_) => "UnknownFrame",
            FrameError::InvalidTopology(_) => "InvalidTopology",
            FrameError::LatticeTooLarge(_) => "LatticeTooLarge",
            FrameError::ImageMismatch(_) => "ImageMismatch",
            FrameError::Numeral(e) => e.name(),
            FrameError::Cauchy(e) => e.name(),
        }
    }
}

/// A frame index `(j, k, g)`: iteration stage, numeral base, gauge label.
/// The gauge label is opaque here; frames differing only in `g` share all
/// arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameId {
    pub stage: i64,
    pub base: u32,
    pub gauge: String,
}

impl FrameId {
    pub fn new(stage: i64, base: u32, gauge: impl Into<String>) -> Result<Self, FrameError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base).into());
        }
        Ok(FrameId {
            stage,
            base,
            gauge: gauge.into(),
        })
    }
}

impl std::fmt::Display for FrameId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "F({},{},{})", self.stage, self.base, self.gauge)
    }
}

/// Direction of a one-way-infinite stage axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// A common-ancestor stage with unbounded descendants.
    Ascending,
    /// A terminal stage with unbounded ancestors.
    Descending,
}

/// Stage topology of the frame field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    FiniteChain { j_min: i64, j_max: i64 },
    OneWayInfinite { anchor: i64, direction: Direction },
    TwoWayInfinite,
    Cyclic { period: u64 },
}

/// A registry of frames under a fixed stage topology. Built once, then
/// read-only.
#[derive(Debug, Clone)]
pub struct FrameGraph {
    topology: Topology,
    frames: BTreeSet<FrameId>,
}

impl FrameGraph {
    pub fn new(topology: Topology) -> Result<Self, FrameError> {
        match topology {
            Topology::FiniteChain { j_min, j_max } if j_min > j_max => {
                return Err(FrameError::InvalidTopology(format!(
                    "finite chain needs j_min <= j_max, got {j_min} > {j_max}"
                )))
            }
            Topology::Cyclic { period: 0 } => {
                return Err(FrameError::InvalidTopology(
                    "cyclic topology needs period >= 1".into(),
                ))
            }
            _ => {}
        }
        Ok(FrameGraph {
            topology,
            frames: BTreeSet::new(),
        })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Registers a frame, checking its stage lies inside the topology.
    pub fn register(&mut self, frame: FrameId) -> Result<(), FrameError> {
        let stage_ok = match self.topology {
            Topology::FiniteChain { j_min, j_max } => {
                frame.stage >= j_min && frame.stage <= j_max
            }
            Topology::OneWayInfinite {
                anchor,
                direction: Direction::Ascending,
            } => frame.stage >= anchor,
            Topology::OneWayInfinite {
                anchor,
                direction: Direction::Descending,
            } => frame.stage <= anchor,
            Topology::TwoWayInfinite => true,
            Topology::Cyclic { period } => frame.stage >= 0 && (frame.stage as u64) < period,
        };
        if !stage_ok {
            return Err(FrameError::InvalidTopology(format!(
                "stage {} lies outside the topology {:?}",
                frame.stage, self.topology
            )));
        }
        self.frames.insert(frame);
        Ok(())
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameId> {
        self.frames.iter()
    }

    fn require(&self, frame: &FrameId) -> Result<(), FrameError> {
        if self.frames.contains(frame) {
            Ok(())
        } else {
            Err(FrameError::UnknownFrame(frame.to_string()))
        }
    }

    /// Whether `observer` can see `target`: descendants and the observer's
    /// own stage are visible, ancestors are not. Cyclic fields relax the
    /// restriction entirely, since every frame is also a descendant.
    pub fn visible(&self, observer: &FrameId, target: &FrameId) -> Result<bool, FrameError> {
        self.require(observer)?;
        self.require(target)?;
        if matches!(self.topology, Topology::Cyclic { .. }) {
            return Ok(true);
        }
        Ok(target.stage >= observer.stage)
    }
}

/// A space-time lattice `L_{j,k,L,m}` with `D` space dimensions and one
/// time dimension, `M = k^L` points per dimension at spacing `Δ = k^{-m}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    frame: FrameId,
    len: u32,
    point: u32,
    dims: u32,
}

impl Lattice {
    pub fn new(frame: FrameId, len: u32, point: u32, dims: u32) -> Result<Self, FrameError> {
        if point > len {
            return Err(FrameError::InvalidSpacing { len, point });
        }
        if dims == 0 {
            return Err(FrameError::InvalidDimension);
        }
        let lattice = Lattice {
            frame,
            len,
            point,
            dims,
        };
        lattice.points_per_dim()?;
        Ok(lattice)
    }

    pub fn frame(&self) -> &FrameId {
        &self.frame
    }

    pub fn base(&self) -> u32 {
        self.frame.base
    }

    /// String length `L`.
    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Point position `m`.
    pub fn point(&self) -> u32 {
        self.point
    }

    /// Space dimension count `D`.
    pub fn dims(&self) -> u32 {
        self.dims
    }

    /// `M = k^L`, exactly.
    pub fn points_per_dim(&self) -> Result<u128, FrameError> {
        let mut m: u128 = 1;
        for _ in 0..self.len {
            m = m.checked_mul(self.frame.base as u128).ok_or_else(|| {
                FrameError::LatticeTooLarge(format!(
                    "k^L = {}^{} exceeds the index space",
                    self.frame.base, self.len
                ))
            })?;
        }
        Ok(m)
    }

    /// `Δ = k^{-m}`, exactly.
    pub fn spacing(&self) -> RationalValue {
        RationalValue::new(
            BigInt::from(1),
            BigInt::from(self.frame.base).pow(self.point),
        )
    }

    /// Number of space sites `M^D`, as an addressable count.
    pub fn site_count(&self) -> Result<usize, FrameError> {
        let m = self.points_per_dim()?;
        let mut total: u128 = 1;
        for _ in 0..self.dims {
            total = total.checked_mul(m).ok_or_else(|| {
                FrameError::LatticeTooLarge(format!(
                    "M^D = {m}^{} exceeds the index space",
                    self.dims
                ))
            })?;
        }
        usize::try_from(total).map_err(|_| {
            FrameError::LatticeTooLarge(format!("{total} sites exceed the address space"))
        })
    }

    fn check_index(&self, index: u128) -> Result<(), FrameError> {
        let bound = self.points_per_dim()?;
        if index >= bound {
            return Err(FrameError::IndexOutOfRange {
                index,
                bound,
            });
        }
        Ok(())
    }

    /// Exact location of a point: `(l_1·Δ, …, l_D·Δ; l_t·Δ)`.
    pub fn point_location(
        &self,
        point: &LatticePoint,
    ) -> Result<(Vec<RationalValue>, RationalValue), FrameError> {
        if point.space.len() != self.dims as usize {
            return Err(FrameError::ImageMismatch(format!(
                "point has {} space indices, lattice has {} dimensions",
                point.space.len(),
                self.dims
            )));
        }
        let delta = self.spacing();
        let mut space = Vec::with_capacity(point.space.len());
        for &l in &point.space {
            self.check_index(l)?;
            space.push(&delta * BigInt::from(l));
        }
        self.check_index(point.time)?;
        let time = &delta * BigInt::from(point.time);
        Ok((space, time))
    }

    /// Iterates all space index tuples in row-major order (dimension 0
    /// varies fastest).
    pub fn space_points(&self) -> impl Iterator<Item = Vec<u128>> {
        let m = self.points_per_dim().unwrap_or(0);
        let dims = self.dims as usize;
        let total = (0..dims).try_fold(1u128, |acc, _| acc.checked_mul(m));
        let total = total.unwrap_or(0);
        (0..total).map(move |flat| {
            let mut rest = flat;
            (0..dims)
                .map(|_| {
                    let idx = rest % m;
                    rest /= m;
                    idx
                })
                .collect()
        })
    }
}

/// Constructs a lattice; fails with `InvalidSpacing` when `m > L`.
pub fn make_lattice(frame: FrameId, len: u32, point: u32, dims: u32) -> Result<Lattice, FrameError> {
    Lattice::new(frame, len, point, dims)
}

/// One lattice point: `D` space indices and a time index, each in `[0, M)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub space: Vec<u128>,
    pub time: u128,
}

impl LatticePoint {
    pub fn new(space: Vec<u128>, time: u128) -> Self {
        LatticePoint { space, time }
    }
}

/// The parent-frame image of one lattice point: a `D`-tuple of hybrid-system
/// states for the space part and one state for the time part. Every
/// component has the lattice's exact `L` and `m` and a `+` sign; its value
/// is the corresponding coordinate `l·Δ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridTupleImage {
    space: Vec<NumeralState>,
    time: NumeralState,
}

impl HybridTupleImage {
    pub fn space(&self) -> &[NumeralState] {
        &self.space
    }

    pub fn time(&self) -> &NumeralState {
        &self.time
    }

    /// Exact coordinates recovered from the component state values.
    pub fn decode_location(&self) -> (Vec<RationalValue>, RationalValue) {
        (
            self.space.iter().map(NumeralState::value).collect(),
            self.time.value(),
        )
    }
}

/// The parent-frame image of a whole lattice: a bijection between lattice
/// points and hybrid-state tuples, evaluated point by point.
#[derive(Debug, Clone)]
pub struct LatticeImage {
    lattice: Lattice,
}

impl LatticeImage {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// The unique state of the hybrid system `S_{j-1,k,L,m}` whose value is
    /// `index·Δ`: the base-`k` digits of `index`, padded to exactly `L`
    /// digits with the point at `m`, sign `+`.
    pub fn component_state(&self, index: u128) -> Result<NumeralState, FrameError> {
        self.lattice.check_index(index)?;
        let base = self.lattice.base() as u128;
        let mut digits = Vec::with_capacity(self.lattice.len() as usize);
        let mut rest = index;
        while rest > 0 {
            digits.push((rest % base) as u32);
            rest /= base;
        }
        digits.resize((self.lattice.len() as usize).max(digits.len()), 0);
        Ok(NumeralState::new(
            self.lattice.base(),
            Sign::Plus,
            digits,
            self.lattice.point() as usize,
        )?)
    }

    /// Decodes a component state back to its lattice index, verifying it is
    /// exactly a state this image produces.
    pub fn component_index(&self, state: &NumeralState) -> Result<u128, FrameError> {
        if state.base() != self.lattice.base()
            || state.len() != self.lattice.len() as usize
            || state.point() != self.lattice.point() as usize
            || state.sign() != Sign::Plus
        {
            return Err(FrameError::ImageMismatch(format!(
                "state {state} does not have the lattice's exact shape (L={}, m={}, base {})",
                self.lattice.len(),
                self.lattice.point(),
                self.lattice.base()
            )));
        }
        let base = self.lattice.base() as u128;
        let mut index: u128 = 0;
        for &d in state.digits().iter().rev() {
            index = index
                .checked_mul(base)
                .and_then(|i| i.checked_add(d as u128))
                .ok_or_else(|| {
                    FrameError::ImageMismatch("component value exceeds the lattice".into())
                })?;
        }
        self.lattice.check_index(index)?;
        Ok(index)
    }

    /// The image of one point.
    pub fn image_of(&self, point: &LatticePoint) -> Result<HybridTupleImage, FrameError> {
        if point.space.len() != self.lattice.dims() as usize {
            return Err(FrameError::ImageMismatch(format!(
                "point has {} space indices, lattice has {} dimensions",
                point.space.len(),
                self.lattice.dims()
            )));
        }
        let space = point
            .space
            .iter()
            .map(|&l| self.component_state(l))
            .collect::<Result<Vec<_>, _>>()?;
        let time = self.component_state(point.time)?;
        Ok(HybridTupleImage { space, time })
    }

    /// Recovers the lattice point from an image tuple.
    pub fn point_of(&self, image: &HybridTupleImage) -> Result<LatticePoint, FrameError> {
        let space = image
            .space
            .iter()
            .map(|s| self.component_index(s))
            .collect::<Result<Vec<_>, _>>()?;
        let time = self.component_index(&image.time)?;
        Ok(LatticePoint { space, time })
    }
}

/// The parent-frame image map of a lattice.
pub fn parent_image_lattice(lattice: &Lattice) -> LatticeImage {
    LatticeImage {
        lattice: lattice.clone(),
    }
}

/// The parent-frame image of a number: the real representative of the
/// state's value over the parent base. Constant-type exactly when the value
/// is representable there; otherwise the periodic stream, like the decimal
/// expansion of 1/6.
pub fn parent_image_number(state: &NumeralState, parent_base: u32) -> Result<RealRep, FrameError> {
    Ok(cauchy::real_convert_base(state, parent_base)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeral::rational;

    fn frame(stage: i64, base: u32) -> FrameId {
        FrameId::new(stage, base, "g0").unwrap()
    }

    #[test]
    fn lattice_sizes_match_definition() {
        let lat = make_lattice(frame(1, 2), 3, 1, 1).unwrap();
        assert_eq!(lat.points_per_dim().unwrap(), 8);
        assert_eq!(lat.spacing(), rational(1, 2));
        // Degenerate single-point lattice.
        let tiny = make_lattice(frame(1, 2), 0, 0, 1).unwrap();
        assert_eq!(tiny.points_per_dim().unwrap(), 1);
        assert_eq!(tiny.spacing(), rational(1, 1));
        // m > L is not a lattice.
        let err = make_lattice(frame(1, 3), 2, 3, 1).unwrap_err();
        assert_eq!(err.name(), "InvalidSpacing");
        let err = make_lattice(frame(1, 3), 2, 1, 0).unwrap_err();
        assert_eq!(err.name(), "InvalidDimension");
    }

    #[test]
    fn point_locations_are_exact() {
        let lat = make_lattice(frame(1, 2), 3, 1, 1).unwrap();
        let (space, time) = lat
            .point_location(&LatticePoint::new(vec![3], 2))
            .unwrap();
        assert_eq!(space, vec![rational(3, 2)]);
        assert_eq!(time, rational(1, 1));

        let origin = lat.point_location(&LatticePoint::new(vec![0], 0)).unwrap();
        assert_eq!(origin.0, vec![rational(0, 1)]);
        assert_eq!(origin.1, rational(0, 1));

        let max = lat.point_location(&LatticePoint::new(vec![7], 7)).unwrap();
        assert_eq!(max.0, vec![rational(7, 2)]);

        let err = lat
            .point_location(&LatticePoint::new(vec![8], 0))
            .unwrap_err();
        assert_eq!(err.name(), "IndexOutOfRange");
    }

    #[test]
    fn visibility_follows_stage_order() {
        let mut graph = FrameGraph::new(Topology::FiniteChain { j_min: 0, j_max: 3 }).unwrap();
        let parent = frame(1, 2);
        let child = frame(2, 2);
        graph.register(parent.clone()).unwrap();
        graph.register(child.clone()).unwrap();
        assert!(graph.visible(&parent, &child).unwrap());
        assert!(!graph.visible(&child, &parent).unwrap());
        assert!(graph.visible(&child, &child).unwrap());

        let stranger = frame(3, 2);
        assert_eq!(
            graph.visible(&parent, &stranger).unwrap_err().name(),
            "UnknownFrame"
        );

        let mut cyclic = FrameGraph::new(Topology::Cyclic { period: 3 }).unwrap();
        let a = frame(0, 2);
        let b = frame(2, 2);
        cyclic.register(a.clone()).unwrap();
        cyclic.register(b.clone()).unwrap();
        assert!(cyclic.visible(&b, &a).unwrap());
        assert!(cyclic.visible(&a, &b).unwrap());
    }

    #[test]
    fn topology_validation() {
        assert_eq!(
            FrameGraph::new(Topology::FiniteChain { j_min: 5, j_max: 1 })
                .unwrap_err()
                .name(),
            "InvalidTopology"
        );
        assert_eq!(
            FrameGraph::new(Topology::Cyclic { period: 0 })
                .unwrap_err()
                .name(),
            "InvalidTopology"
        );
        let mut chain = FrameGraph::new(Topology::FiniteChain { j_min: 0, j_max: 1 }).unwrap();
        assert_eq!(
            chain.register(frame(7, 2)).unwrap_err().name(),
            "InvalidTopology"
        );
    }

    #[test]
    fn image_states_keep_exact_shape() {
        let lat = make_lattice(frame(1, 2), 3, 3, 1).unwrap();
        let image = parent_image_lattice(&lat);
        let tuple = image.image_of(&LatticePoint::new(vec![7], 0)).unwrap();
        let s = &tuple.space()[0];
        assert_eq!(s.value(), rational(7, 8));
        assert_eq!(s.len(), 3);
        assert_eq!(s.point(), 3);
        assert_eq!(s.sign(), Sign::Plus);
        assert_eq!(s.format_compact().unwrap(), "+111");

        // The origin maps to the L-digit zero state with the point at m,
        // not to the trimmed |+0⟩.
        let origin = image.image_of(&LatticePoint::new(vec![0], 0)).unwrap();
        assert_eq!(origin.space()[0].digits(), &[0, 0, 0]);
        assert_eq!(origin.space()[0].point(), 3);
    }

    #[test]
    fn image_is_a_bijection_on_small_lattice() {
        let lat = make_lattice(frame(1, 2), 2, 0, 2).unwrap();
        let image = parent_image_lattice(&lat);
        let mut seen = std::collections::BTreeSet::new();
        let mut count = 0;
        for space in lat.space_points() {
            let point = LatticePoint::new(space, 0);
            let tuple = image.image_of(&point).unwrap();
            assert_eq!(image.point_of(&tuple).unwrap(), point);
            let (loc, _) = tuple.decode_location();
            assert_eq!(loc, lat.point_location(&point).unwrap().0);
            seen.insert(tuple.space().to_vec());
            count += 1;
        }
        assert_eq!(count, 16);
        assert_eq!(seen.len(), 16, "images must be pairwise distinct");
    }

    #[test]
    fn foreign_states_are_rejected_by_decode() {
        let lat = make_lattice(frame(1, 2), 3, 3, 1).unwrap();
        let image = parent_image_lattice(&lat);
        // Trimmed shape differs from the lattice's exact (L, m).
        let trimmed = NumeralState::parse_compact("+1", 2).unwrap();
        assert_eq!(
            image.component_index(&trimmed).unwrap_err().name(),
            "ImageMismatch"
        );
    }

    #[test]
    fn parent_image_number_follows_denominator() {
        // Same base: trivially constant-type.
        let a = NumeralState::parse_compact("11+1", 2).unwrap();
        assert!(parent_image_number(&a, 2).unwrap().is_constant_type());
        // Base 4 value 3/4 into base 2: 0.11, constant-type.
        let b = NumeralState::parse_compact("0+3", 4).unwrap();
        let rep = parent_image_number(&b, 2).unwrap();
        assert!(rep.is_constant_type());
        let prefix = rep.prefix(2).unwrap();
        assert_eq!(prefix.value(), rational(3, 4));
        // Base 6 value 1/6 into base 3: the prime 2 blocks a constant
        // sequence; the stream is periodic.
        let c = NumeralState::parse_compact("0+1", 6).unwrap();
        assert!(!parent_image_number(&c, 3).unwrap().is_constant_type());
    }

    #[test]
    fn consecutive_lattices_nest_at_half_depth() {
        // m = floor(L/2): every coarser location reappears in the finer set.
        for len in 0..=8u32 {
            let coarse = make_lattice(frame(1, 2), len, len / 2, 1).unwrap();
            let fine = make_lattice(frame(1, 2), len + 1, (len + 1) / 2, 1).unwrap();
            let fine_m = fine.points_per_dim().unwrap();
            let shift = fine.point() - coarse.point();
            for l in 0..coarse.points_per_dim().unwrap() {
                // coarse location l·k^{-m} = (l·k^{m'-m})·k^{-m'}.
                let lifted = l * 2u128.pow(shift);
                assert!(lifted < fine_m, "L={len}: location {l} must lift");
                let a = coarse
                    .point_location(&LatticePoint::new(vec![l], 0))
                    .unwrap()
                    .0;
                let b = fine
                    .point_location(&LatticePoint::new(vec![lifted], 0))
                    .unwrap()
                    .0;
                assert_eq!(a, b);
            }
        }
    }
}
