//! Fourier-disjoint weights.
//!
//! A `k×k×C_in×C_out` parameter budget is read as the spectrum of a
//! `k·C_in × k·C_out` real grid. Coefficients are ordered by the L₂ norm of
//! their centered Fourier index and cut into `n` contiguous groups; each
//! group is transformed back on its own and the result is tiled into a
//! standard weight. Disjoint spectral supports make the `n` weights exactly
//! orthogonal.
//!
//! Realness comes from a Hermitian layout: a conjugate index pair shares one
//! `(re, im)` parameter pair, a self-conjugate index carries one real
//! parameter, and both members of a pair always land in the same group.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{dft2, idft2, ComplexGrid, FourierIndex, Tensor, WeightShape};

/// Largest tolerated imaginary residue after the inverse transform.
pub const REALNESS_TOL: f64 = 1e-10;

/// Default number of disjoint weights.
pub const DEFAULT_WEIGHT_COUNT: usize = 64;

/// The smallest indivisible piece of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    SelfConjugate(FourierIndex),
    /// `(primary, partner)`; the primary comes first in the sorted order and
    /// stores `re + i·im`, the partner its conjugate.
    Pair(FourierIndex, FourierIndex),
}

impl Unit {
    /// Real parameters this unit consumes.
    pub fn param_count(&self) -> usize {
        match self {
            Unit::SelfConjugate(_) => 1,
            Unit::Pair(..) => 2,
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = FourierIndex> {
        let (a, b) = match *self {
            Unit::SelfConjugate(i) => (i, None),
            Unit::Pair(i, j) => (i, Some(j)),
        };
        std::iter::once(a).chain(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub index: FourierIndex,
    pub radius: f64,
    pub unit: usize,
}

/// Every Fourier index of the `k·C_in × k·C_out` grid, sorted by
/// `(radius, u, v)`, together with its conjugate units.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable {
    shape: WeightShape,
    entries: Vec<TableEntry>,
    units: Vec<Unit>,
    /// Offset of each unit's first parameter in the bank.
    offsets: Vec<usize>,
}

impl IndexTable {
    pub fn build(shape: WeightShape) -> Result<Self> {
        if shape.k == 0 || shape.c_in == 0 || shape.c_out == 0 {
            return Err(Error::InvalidArgument(format!(
                "index table needs positive extents, got {shape:?}"
            )));
        }
        let (rows, cols) = (shape.k * shape.c_in, shape.k * shape.c_out);
        let mut indices: Vec<FourierIndex> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| FourierIndex::from_storage(r, c, rows, cols)))
            .collect();
        // Squared radii are exact integers, so ties are detected exactly.
        indices.sort_by_key(|i| (i.u * i.u + i.v * i.v, i.u, i.v));

        let mut unit_of = vec![usize::MAX; rows * cols];
        let mut units = Vec::new();
        let mut offsets = Vec::new();
        let mut next_offset = 0;
        let mut entries = Vec::with_capacity(rows * cols);
        for &index in &indices {
            let (r, c) = index.storage(rows, cols);
            if unit_of[r * cols + c] == usize::MAX {
                let partner = index.conjugate(rows, cols);
                let unit = if partner == index {
                    Unit::SelfConjugate(index)
                } else {
                    Unit::Pair(index, partner)
                };
                for member in unit.indices() {
                    let (mr, mc) = member.storage(rows, cols);
                    unit_of[mr * cols + mc] = units.len();
                }
                offsets.push(next_offset);
                next_offset += unit.param_count();
                units.push(unit);
            }
            entries.push(TableEntry {
                index,
                radius: index.radius(),
                unit: unit_of[r * cols + c],
            });
        }
        debug_assert_eq!(next_offset, rows * cols);
        Ok(Self {
            shape,
            entries,
            units,
            offsets,
        })
    }

    pub fn shape(&self) -> WeightShape {
        self.shape
    }

    /// Grid extents `(k·C_in, k·C_out)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.shape.k * self.shape.c_in, self.shape.k * self.shape.c_out)
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn param_count(&self) -> usize {
        self.shape.len()
    }

    pub fn unit_offset(&self, unit: usize) -> usize {
        self.offsets[unit]
    }
}

/// Maps each unit to one of `n` contiguous groups of the sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    n: usize,
    unit_group: Vec<usize>,
    /// Unit ids belonging to each group, ascending.
    members: Vec<Vec<usize>>,
}

impl GroupAssignment {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn group_of(&self, unit: usize) -> usize {
        self.unit_group[unit]
    }

    pub fn members(&self, group: usize) -> &[usize] {
        &self.members[group]
    }

    pub fn group_param_count(&self, table: &IndexTable, group: usize) -> usize {
        self.members[group]
            .iter()
            .map(|&u| table.units()[u].param_count())
            .sum()
    }
}

/// Splits the sorted units into `n` contiguous groups balanced by parameter
/// count. Every group count lies in a window `[L, L + 2]` around
/// `total / n`; within it each cut lands as close as possible to the ideal
/// prefix `(g + 1)·total / n`.
pub fn assign_groups(table: &IndexTable, n: usize) -> Result<GroupAssignment> {
    let units = table.units();
    if n == 0 || n > units.len() {
        return Err(Error::InvalidArgument(format!(
            "group count {n} must lie in 1..={} (the number of conjugate units)",
            units.len()
        )));
    }
    let mut prefix = Vec::with_capacity(units.len() + 1);
    prefix.push(0);
    for u in units {
        prefix.push(prefix.last().unwrap() + u.param_count());
    }
    let total = prefix[units.len()];
    let q = total / n;
    let windows = [q.saturating_sub(1), q, q.saturating_sub(2)];
    let cuts = windows
        .iter()
        .find_map(|&low| balanced_cuts(&prefix, n, low.max(1), low + 2))
        .ok_or_else(|| Error::InvalidArgument(format!("no balanced split of {total} parameters into {n} groups")))?;
    let mut unit_group = vec![0; units.len()];
    let mut members = Vec::with_capacity(n);
    for group in 0..n {
        let range = cuts[group]..cuts[group + 1];
        unit_group[range.clone()].fill(group);
        members.push(range.collect());
    }
    Ok(GroupAssignment { n, unit_group, members })
}

/// Unit boundaries `0 = c_0 < … < c_n = units` with every group count in
/// `[low, high]`, or `None` when no such split exists.
fn balanced_cuts(prefix: &[usize], n: usize, low: usize, high: usize) -> Option<Vec<usize>> {
    let units = prefix.len() - 1;
    let total = prefix[units];
    // ok[g][j]: units j.. split into n - g groups
    let mut ok = vec![vec![false; units + 1]; n + 1];
    ok[n][units] = true;
    for g in (0..n).rev() {
        for j in 0..units {
            let mut e = first_reaching(prefix, j, low);
            while e <= units && prefix[e] - prefix[j] <= high {
                if ok[g + 1][e] {
                    ok[g][j] = true;
                    break;
                }
                e += 1;
            }
        }
    }
    if !ok[0][0] {
        return None;
    }
    let mut cuts = vec![0];
    let mut j = 0;
    for g in 0..n {
        let ideal = (g + 1) * total;
        let mut best: Option<usize> = None;
        let mut e = first_reaching(prefix, j, low);
        while e <= units && prefix[e] - prefix[j] <= high {
            if ok[g + 1][e] {
                let miss = (prefix[e] * n).abs_diff(ideal);
                if best.is_none_or(|b| miss < (prefix[b] * n).abs_diff(ideal)) {
                    best = Some(e);
                }
            }
            e += 1;
        }
        j = best?;
        cuts.push(j);
    }
    Some(cuts)
}

/// First boundary `e > j` whose group from `j` holds at least `low` parameters.
fn first_reaching(prefix: &[usize], j: usize, low: usize) -> usize {
    j + 1 + prefix[j + 1..].partition_point(|&p| p - prefix[j] < low)
}

/// The learnable spectral coefficients, laid out unit by unit in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBank {
    params: Tensor,
}

impl SpectralBank {
    pub fn new(table: &IndexTable, params: Tensor) -> Result<Self> {
        if params.shape() != [table.param_count()] {
            return Err(Error::shape(
                "spectral bank",
                format!(
                    "expected [{}] coefficients, got {:?}",
                    table.param_count(),
                    params.shape()
                ),
            ));
        }
        Ok(Self { params })
    }

    pub fn zeros(table: &IndexTable) -> Self {
        Self {
            params: Tensor::zeros(&[table.param_count()]),
        }
    }

    /// Coefficients whose ungrouped materialization is exactly `w`.
    pub fn from_spatial(table: &IndexTable, w: &Tensor) -> Result<Self> {
        let shape = table.shape();
        if w.shape() != shape.dims() {
            return Err(Error::shape(
                "spectral bank from spatial",
                format!("expected {:?}, got {:?}", shape.dims(), w.shape()),
            ));
        }
        let (rows, cols) = table.grid();
        let spectrum = dft2(&tile(w, shape))?;
        let mut params = vec![0.0; table.param_count()];
        for (u, unit) in table.units().iter().enumerate() {
            let off = table.unit_offset(u);
            match *unit {
                Unit::SelfConjugate(i) => {
                    let (r, c) = i.storage(rows, cols);
                    params[off] = spectrum.get(r, c).re;
                }
                Unit::Pair(i, _) => {
                    let (r, c) = i.storage(rows, cols);
                    let z = spectrum.get(r, c);
                    params[off] = z.re;
                    params[off + 1] = z.im;
                }
            }
        }
        Ok(Self {
            params: Tensor::from_parts(vec![table.param_count()], params),
        })
    }

    /// Samples a fan-in scaled normal spatial weight, multiplies it by `√n`
    /// so each of the `n` group weights carries fan-in variance on average,
    /// and stores its spectrum.
    pub fn init_kaiming<R: Rng + ?Sized>(table: &IndexTable, n: usize, rng: &mut R) -> Result<Self> {
        let shape = table.shape();
        let fan_in = (shape.k * shape.k * shape.c_in) as f64;
        let std = (2.0 / fan_in).sqrt() * (n as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive deviation");
        let w = Tensor::from_fn(&shape.dims(), |_| normal.sample(rng));
        Self::from_spatial(table, &w)
    }

    pub fn params(&self) -> &Tensor {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Tensor {
        &mut self.params
    }

    pub fn into_params(self) -> Tensor {
        self.params
    }
}

/// Inverse of the reassembly: weight `k×k×C_in×C_out` → grid `k·C_in × k·C_out`
/// with `grid[r·k + a, c·k + b] = w[a, b, r, c]`.
pub fn tile(w: &Tensor, shape: WeightShape) -> Tensor {
    let k = shape.k;
    let cols = k * shape.c_out;
    let mut grid = vec![0.0; shape.len()];
    for a in 0..k {
        for b in 0..k {
            for r in 0..shape.c_in {
                for c in 0..shape.c_out {
                    grid[(r * k + a) * cols + c * k + b] = w.data()[shape.offset(a, b, r, c)];
                }
            }
        }
    }
    Tensor::from_parts(vec![k * shape.c_in, cols], grid)
}

/// Crops a `k·C_in × k·C_out` grid into `k×k` tiles; tile `(r, c)` becomes
/// the filter at input channel `r`, output channel `c`.
pub fn untile(grid: &[f64], shape: WeightShape) -> Tensor {
    let k = shape.k;
    let cols = k * shape.c_out;
    let mut w = vec![0.0; shape.len()];
    for a in 0..k {
        for b in 0..k {
            for r in 0..shape.c_in {
                for c in 0..shape.c_out {
                    w[shape.offset(a, b, r, c)] = grid[(r * k + a) * cols + c * k + b];
                }
            }
        }
    }
    Tensor::from_parts(shape.dims().to_vec(), w)
}

/// Index table plus grouping: everything needed to turn a bank into weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FdwBasis {
    table: IndexTable,
    assignment: GroupAssignment,
}

impl FdwBasis {
    pub fn new(shape: WeightShape, n: usize) -> Result<Self> {
        let table = IndexTable::build(shape)?;
        let assignment = assign_groups(&table, n)?;
        Ok(Self { table, assignment })
    }

    pub fn from_parts(table: IndexTable, assignment: GroupAssignment) -> Result<Self> {
        if assignment.unit_group.len() != table.units().len() {
            return Err(Error::shape(
                "fdw basis",
                format!(
                    "assignment covers {} units, table has {}",
                    assignment.unit_group.len(),
                    table.units().len()
                ),
            ));
        }
        Ok(Self { table, assignment })
    }

    pub fn table(&self) -> &IndexTable {
        &self.table
    }

    pub fn assignment(&self) -> &GroupAssignment {
        &self.assignment
    }

    pub fn shape(&self) -> WeightShape {
        self.table.shape()
    }

    pub fn n(&self) -> usize {
        self.assignment.n()
    }

    fn check_bank(&self, params: &Tensor) -> Result<()> {
        if params.shape() != [self.table.param_count()] {
            return Err(Error::shape(
                "materialize_weights",
                format!(
                    "bank {:?} does not match table with {} coefficients",
                    params.shape(),
                    self.table.param_count()
                ),
            ));
        }
        Ok(())
    }

    /// Hermitian spectrum of one group with every other index zeroed.
    /// `None` selects all groups.
    pub fn group_spectrum(&self, params: &Tensor, group: Option<usize>) -> Result<ComplexGrid> {
        self.check_bank(params)?;
        let (rows, cols) = self.table.grid();
        let mut grid = ComplexGrid::zeros(rows, cols);
        let p = params.data();
        let mut place = |u: usize| {
            let off = self.table.unit_offset(u);
            match self.table.units()[u] {
                Unit::SelfConjugate(i) => {
                    let (r, c) = i.storage(rows, cols);
                    grid.set(r, c, Complex64::new(p[off], 0.0));
                }
                Unit::Pair(i, j) => {
                    let z = Complex64::new(p[off], p[off + 1]);
                    let (r, c) = i.storage(rows, cols);
                    grid.set(r, c, z);
                    let (r, c) = j.storage(rows, cols);
                    grid.set(r, c, z.conj());
                }
            }
        };
        match group {
            Some(g) => self.assignment.members(g).iter().for_each(|&u| place(u)),
            None => (0..self.table.units().len()).for_each(place),
        }
        Ok(grid)
    }

    fn materialize_spectrum(&self, spectrum: &ComplexGrid) -> Result<Tensor> {
        let spatial = idft2(spectrum)?.real_checked(REALNESS_TOL, "materialize_weights")?;
        Ok(untile(spatial.data(), self.shape()))
    }

    /// Weight of a single group.
    pub fn materialize_group(&self, params: &Tensor, group: usize) -> Result<Tensor> {
        self.materialize_spectrum(&self.group_spectrum(params, Some(group))?)
    }

    /// All `n` group weights.
    pub fn materialize(&self, bank: &SpectralBank) -> Result<Vec<Tensor>> {
        (0..self.n())
            .map(|g| self.materialize_group(bank.params(), g))
            .collect()
    }

    /// Weight from the ungrouped bank (equals the sum of all group weights).
    pub fn materialize_full(&self, bank: &SpectralBank) -> Result<Tensor> {
        self.materialize_spectrum(&self.group_spectrum(bank.params(), None)?)
    }

    /// Adjoint of `params ↦ W_group`, returning the gradient over that group's
    /// coefficients in layout order.
    pub fn adjoint_group(&self, grad: &Tensor, group: usize) -> Result<Tensor> {
        let mut full = vec![0.0; self.table.param_count()];
        self.adjoint_group_into(grad, group, &mut full)?;
        let mut out = Vec::with_capacity(self.assignment.group_param_count(&self.table, group));
        for &u in self.assignment.members(group) {
            let off = self.table.unit_offset(u);
            out.extend_from_slice(&full[off..off + self.table.units()[u].param_count()]);
        }
        Ok(Tensor::from_parts(vec![out.len()], out))
    }

    /// Accumulates the adjoint of `params ↦ W_group` into a full-length
    /// coefficient gradient.
    pub(crate) fn adjoint_group_into(&self, grad: &Tensor, group: usize, full: &mut [f64]) -> Result<()> {
        let shape = self.shape();
        if grad.shape() != shape.dims() {
            return Err(Error::shape(
                "fdw adjoint",
                format!("expected {:?}, got {:?}", shape.dims(), grad.shape()),
            ));
        }
        let (rows, cols) = self.table.grid();
        let spectrum = dft2(&tile(grad, shape))?;
        let norm = 1.0 / (rows * cols) as f64;
        for &u in self.assignment.members(group) {
            let off = self.table.unit_offset(u);
            match self.table.units()[u] {
                Unit::SelfConjugate(i) => {
                    let (r, c) = i.storage(rows, cols);
                    full[off] += spectrum.get(r, c).re * norm;
                }
                Unit::Pair(i, j) => {
                    let (r, c) = i.storage(rows, cols);
                    let a = spectrum.get(r, c);
                    let (r, c) = j.storage(rows, cols);
                    let b = spectrum.get(r, c);
                    full[off] += (a.re + b.re) * norm;
                    full[off + 1] += (a.im - b.im) * norm;
                }
            }
        }
        Ok(())
    }

    /// Expands a group-local gradient (as returned by [`adjoint_group`]) into
    /// the full coefficient layout.
    ///
    /// [`adjoint_group`]: FdwBasis::adjoint_group
    pub fn scatter_group(&self, group_params: &Tensor, group: usize) -> Result<Tensor> {
        let expected = self.assignment.group_param_count(&self.table, group);
        if group_params.len() != expected {
            return Err(Error::shape(
                "scatter_group",
                format!("group {group} has {expected} coefficients, got {}", group_params.len()),
            ));
        }
        let mut full = vec![0.0; self.table.param_count()];
        let mut cursor = 0;
        for &u in self.assignment.members(group) {
            let off = self.table.unit_offset(u);
            let len = self.table.units()[u].param_count();
            full[off..off + len].copy_from_slice(&group_params.data()[cursor..cursor + len]);
            cursor += len;
        }
        Ok(Tensor::from_parts(vec![full.len()], full))
    }
}

/// `Σ_i π_i · W_i`.
pub fn mix_weights(weights: &[Tensor], pi: &[f64]) -> Result<Tensor> {
    if weights.len() != pi.len() || weights.is_empty() {
        return Err(Error::shape(
            "mix_weights",
            format!("{} weights vs {} coefficients", weights.len(), pi.len()),
        ));
    }
    if let Some(index) = pi.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "mix_weights coefficients",
            index,
        });
    }
    let mut out = Tensor::zeros(weights[0].shape());
    for (w, &p) in weights.iter().zip(pi) {
        out.expect_same_shape(w, "mix_weights")?;
        for (dst, &v) in out.data_mut().iter_mut().zip(w.data()) {
            *dst += p * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn idx(u: i64, v: i64) -> FourierIndex {
        FourierIndex::new(u, v)
    }

    #[test]
    fn two_by_two_grid_is_all_self_conjugate() {
        let table = IndexTable::build(WeightShape::new(1, 2, 2)).unwrap();
        let got: Vec<(FourierIndex, f64)> = table.entries().iter().map(|e| (e.index, e.radius)).collect();
        assert_eq!(
            got,
            vec![
                (idx(0, 0), 0.0),
                (idx(-1, 0), 1.0),
                (idx(0, -1), 1.0),
                (idx(-1, -1), 2f64.sqrt()),
            ]
        );
        assert!(table.units().iter().all(|u| matches!(u, Unit::SelfConjugate(_))));
    }

    #[test]
    fn three_by_three_units() {
        let table = IndexTable::build(WeightShape::new(3, 1, 1)).unwrap();
        assert_eq!(
            table.units(),
            &[
                Unit::SelfConjugate(idx(0, 0)),
                Unit::Pair(idx(-1, 0), idx(1, 0)),
                Unit::Pair(idx(0, -1), idx(0, 1)),
                Unit::Pair(idx(-1, -1), idx(1, 1)),
                Unit::Pair(idx(-1, 1), idx(1, -1)),
            ]
        );
    }

    #[test]
    fn groups_split_three_by_three() {
        let table = IndexTable::build(WeightShape::new(3, 1, 1)).unwrap();
        let one = assign_groups(&table, 1).unwrap();
        assert_eq!(one.members(0), &[0, 1, 2, 3, 4]);
        let two = assign_groups(&table, 2).unwrap();
        assert_eq!(two.members(0), &[0, 1, 2]);
        assert_eq!(two.members(1), &[3, 4]);
        assert_eq!(two.group_param_count(&table, 0), 5);
        assert_eq!(two.group_param_count(&table, 1), 4);
    }

    #[test]
    fn too_many_groups_rejected() {
        let table = IndexTable::build(WeightShape::new(3, 1, 1)).unwrap();
        let err = assign_groups(&table, 6).unwrap_err().to_string();
        assert!(err.contains('6') && err.contains('5'), "{err}");
        assert!(assign_groups(&table, 0).is_err());
    }

    #[test]
    fn dc_coefficient_materializes_constant() {
        let shape = WeightShape::new(1, 2, 2);
        let basis = FdwBasis::new(shape, 1).unwrap();
        let mut params = Tensor::zeros(&[4]);
        params.data_mut()[0] = 4.0;
        let bank = SpectralBank::new(basis.table(), params).unwrap();
        let w = basis.materialize(&bank).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn zero_bank_gives_zero_weights() {
        let basis = FdwBasis::new(WeightShape::new(3, 2, 3), 4).unwrap();
        let weights = basis.materialize(&SpectralBank::zeros(basis.table())).unwrap();
        assert_eq!(weights.len(), 4);
        assert!(weights.iter().all(|w| w.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn tiling_is_a_permutation() {
        let shape = WeightShape::new(3, 2, 4);
        let w = Tensor::from_fn(&shape.dims(), |i| i as f64);
        let grid = tile(&w, shape);
        assert_eq!(grid.shape(), &[6, 12]);
        assert_eq!(untile(grid.data(), shape), w);
        // tile (r=1, c=2), tap (a=0, b=1) → grid row 3, col 7
        assert_eq!(grid.data()[3 * 12 + 7], w.data()[shape.offset(0, 1, 1, 2)]);
    }

    #[test]
    fn spatial_round_trip_through_bank() {
        let shape = WeightShape::new(3, 2, 2);
        let table = IndexTable::build(shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Tensor::from_fn(&shape.dims(), |_| rng.gen_range(-1.0..1.0));
        let bank = SpectralBank::from_spatial(&table, &w).unwrap();
        let basis = FdwBasis::from_parts(table.clone(), assign_groups(&table, 1).unwrap()).unwrap();
        let back = basis.materialize_full(&bank).unwrap();
        assert!(back.max_abs_diff(&w).unwrap() < 1e-12);
    }

    #[test]
    fn mixing() {
        let a = Tensor::from_fn(&[1, 1, 1, 2], |i| i as f64);
        let b = Tensor::from_fn(&[1, 1, 1, 2], |i| 10.0 + i as f64);
        let ws = vec![a.clone(), b.clone()];
        assert_eq!(mix_weights(&ws, &[0.0, 1.0]).unwrap(), b);
        assert_eq!(mix_weights(&ws, &[0.5, 0.5]).unwrap().data(), &[5.0, 6.0]);
        assert!(mix_weights(&ws, &[1.0]).is_err());
    }

    #[test]
    fn unit_gradient_on_trivial_grid() {
        let basis = FdwBasis::new(WeightShape::new(1, 1, 1), 1).unwrap();
        let g = basis.adjoint_group(&Tensor::full(&[1, 1, 1, 1], 2.5), 0).unwrap();
        assert_eq!(g.data(), &[2.5]);
        let zero = basis.adjoint_group(&Tensor::zeros(&[1, 1, 1, 1]), 0).unwrap();
        assert_eq!(zero.data(), &[0.0]);
    }
}
