//! Geometry of the px-by-py domain decomposition: core regions that tile
//! the grid, the 8-neighborhood topology (edges and corners both carry
//! data, because 2-D convolution halos need corner cells for exactness),
//! and the extraction/assembly maps used by training and inference.
//!
//! Rank order is row-major over the subdomain grid. Row 0 is north; east
//! is the +column direction. Halo cells beyond the physical domain edge
//! read as zero under both padding strategies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{slice_region, OutOfBoundsPolicy, Tensor3};
use crate::neural::{pad_schedule, REFERENCE_KERNEL, REFERENCE_WIDTHS};

/// Compass direction to a neighboring subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    S,
    E,
    W,
    NE,
    NW,
    SE,
    SW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::S,
        Direction::E,
        Direction::W,
        Direction::NE,
        Direction::NW,
        Direction::SE,
        Direction::SW,
    ];

    /// The direction the sender occupies from the receiver's point of view.
    pub fn mirror(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::S => Direction::N,
            Direction::E => Direction::W,
            Direction::W => Direction::E,
            Direction::NE => Direction::SW,
            Direction::NW => Direction::SE,
            Direction::SE => Direction::NW,
            Direction::SW => Direction::NE,
        }
    }

    /// (row, col) offset in the subdomain grid.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::N => (-1, 0),
            Direction::S => (1, 0),
            Direction::E => (0, 1),
            Direction::W => (0, -1),
            Direction::NE => (-1, 1),
            Direction::NW => (-1, -1),
            Direction::SE => (1, 1),
            Direction::SW => (1, -1),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// How subdomain networks obtain the extra cells their convolutions consume
/// at subdomain edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaddingStrategy {
    /// Overlap only the first layer's input (2-cell halo); deeper layers
    /// zero-pad, so interior seams are approximate.
    ZeroInner,
    /// Carry enough halo (8 cells) for every layer to run unpadded; the
    /// assembled result exactly matches the monolithic network.
    ExactHalo,
}

impl PaddingStrategy {
    /// Halo cells per side for the reference architecture, derived from its
    /// padding schedule rather than stated as a literal.
    pub fn halo(&self) -> usize {
        let n_layers = REFERENCE_WIDTHS.len() - 1;
        pad_schedule(*self, n_layers)
            .iter()
            .map(|p| p.shrink_per_side(REFERENCE_KERNEL))
            .sum()
    }
}

impl std::fmt::Display for PaddingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PaddingStrategy::ZeroInner => write!(f, "zero-inner"),
            PaddingStrategy::ExactHalo => write!(f, "exact-halo"),
        }
    }
}

impl std::str::FromStr for PaddingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-inner" => Ok(PaddingStrategy::ZeroInner),
            "exact-halo" => Ok(PaddingStrategy::ExactHalo),
            other => Err(Error::Config(format!(
                "unknown padding strategy '{other}' (expected zero-inner or exact-halo)"
            ))),
        }
    }
}

/// Neighbor ranks by direction; `None` marks a physical domain boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbors {
    pub n: Option<usize>,
    pub s: Option<usize>,
    pub e: Option<usize>,
    pub w: Option<usize>,
    pub ne: Option<usize>,
    pub nw: Option<usize>,
    pub se: Option<usize>,
    pub sw: Option<usize>,
}

impl Neighbors {
    pub fn get(&self, dir: Direction) -> Option<usize> {
        match dir {
            Direction::N => self.n,
            Direction::S => self.s,
            Direction::E => self.e,
            Direction::W => self.w,
            Direction::NE => self.ne,
            Direction::NW => self.nw,
            Direction::SE => self.se,
            Direction::SW => self.sw,
        }
    }

    fn set(&mut self, dir: Direction, rank: Option<usize>) {
        match dir {
            Direction::N => self.n = rank,
            Direction::S => self.s = rank,
            Direction::E => self.e = rank,
            Direction::W => self.w = rank,
            Direction::NE => self.ne = rank,
            Direction::NW => self.nw = rank,
            Direction::SE => self.se = rank,
            Direction::SW => self.sw = rank,
        }
    }

    /// Directions that lead to another rank rather than the boundary.
    pub fn present(&self) -> impl Iterator<Item = (Direction, usize)> + '_ {
        Direction::ALL
            .into_iter()
            .filter_map(|d| self.get(d).map(|r| (d, r)))
    }

    pub fn count(&self) -> usize {
        self.present().count()
    }
}

/// One rank's share of the grid: its core rectangle and neighbor map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdomainSpec {
    pub rank: usize,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
    pub neighbors: Neighbors,
}

/// The full decomposition. Cores tile the global grid exactly and
/// disjointly; `halo` is the per-side overlap the active strategy needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub global_h: usize,
    pub global_w: usize,
    pub px: usize,
    pub py: usize,
    pub halo: usize,
    pub strategy: PaddingStrategy,
    pub ranks: Vec<SubdomainSpec>,
}

impl Partition {
    pub fn n_ranks(&self) -> usize {
        self.ranks.len()
    }

    /// Directed rank-to-rank messages one exchange step produces: the sum
    /// of every rank's non-boundary directions.
    pub fn messages_per_step(&self) -> usize {
        self.ranks.iter().map(|r| r.neighbors.count()).sum()
    }
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// Decompose a `global_h` x `global_w` grid into `py` rows by `px` columns
/// of equal cores. Ragged splits are rejected with the valid divisor lists.
pub fn make_partition(
    global_h: usize,
    global_w: usize,
    px: usize,
    py: usize,
    strategy: PaddingStrategy,
) -> Result<Partition> {
    if px == 0 || py == 0 || global_h == 0 || global_w == 0 {
        return Err(Error::Config(
            "partition needs px, py, global_h, global_w >= 1".into(),
        ));
    }
    if !global_h.is_multiple_of(py) || !global_w.is_multiple_of(px) {
        return Err(Error::Config(format!(
            "grid {global_h}x{global_w} not divisible by py={py}, px={px}; \
             valid py: {:?}, valid px: {:?}",
            divisors(global_h),
            divisors(global_w)
        )));
    }
    let rows = global_h / py;
    let cols = global_w / px;
    let mut ranks = Vec::with_capacity(px * py);
    for ry in 0..py {
        for rx in 0..px {
            let mut neighbors = Neighbors::default();
            for dir in Direction::ALL {
                let (dr, dc) = dir.offset();
                let (nry, nrx) = (ry as i64 + dr, rx as i64 + dc);
                let inside = nry >= 0 && nrx >= 0 && nry < py as i64 && nrx < px as i64;
                neighbors.set(dir, inside.then(|| nry as usize * px + nrx as usize));
            }
            ranks.push(SubdomainSpec {
                rank: ry * px + rx,
                row0: ry * rows,
                col0: rx * cols,
                rows,
                cols,
                neighbors,
            });
        }
    }
    Ok(Partition {
        global_h,
        global_w,
        px,
        py,
        halo: strategy.halo(),
        strategy,
        ranks,
    })
}

fn check_global_shape(t: &Tensor3, p_h: usize, p_w: usize) -> Result<()> {
    if t.h() != p_h || t.w() != p_w {
        return Err(Error::ShapeMismatch(format!(
            "global tensor is {}x{}, partition covers {p_h}x{p_w}",
            t.h(),
            t.w()
        )));
    }
    Ok(())
}

/// The training-time view of one rank: its core extended by `halo` cells
/// per side, copied from the global tensor where neighbors exist and
/// zero-filled past the physical boundary.
pub fn extract_input(t: &Tensor3, spec: &SubdomainSpec, halo: usize) -> Result<Tensor3> {
    slice_region(
        t,
        spec.row0 as i64 - halo as i64,
        spec.col0 as i64 - halo as i64,
        spec.rows + 2 * halo,
        spec.cols + 2 * halo,
        OutOfBoundsPolicy::ZeroFill,
    )
}

/// A rank's core region cut from the global tensor.
pub fn extract_core(t: &Tensor3, spec: &SubdomainSpec) -> Result<Tensor3> {
    slice_region(
        t,
        spec.row0 as i64,
        spec.col0 as i64,
        spec.rows,
        spec.cols,
        OutOfBoundsPolicy::Strict,
    )
}

/// One rank's halo strips, keyed by compass direction.
pub type StripMap = BTreeMap<Direction, Tensor3>;

/// Cut the 8 outgoing halo strips from a core-sized tensor: `halo`-deep
/// edge slabs and `halo` x `halo` corners, each taken from the core's
/// outermost cells on that side.
pub fn halo_strips(t_local: &Tensor3, halo: usize) -> Result<StripMap> {
    let (rows, cols) = (t_local.h(), t_local.w());
    if halo == 0 {
        return Err(Error::Config("halo_strips needs halo >= 1".into()));
    }
    if halo > rows || halo > cols {
        return Err(Error::ShapeMismatch(format!(
            "halo {halo} exceeds core {rows}x{cols}"
        )));
    }
    let h = halo as i64;
    let (r, c) = (rows as i64, cols as i64);
    let cut = |row0: i64, col0: i64, nr: usize, nc: usize| {
        slice_region(t_local, row0, col0, nr, nc, OutOfBoundsPolicy::Strict)
    };
    let mut strips = BTreeMap::new();
    strips.insert(Direction::N, cut(0, 0, halo, cols)?);
    strips.insert(Direction::S, cut(r - h, 0, halo, cols)?);
    strips.insert(Direction::E, cut(0, c - h, rows, halo)?);
    strips.insert(Direction::W, cut(0, 0, rows, halo)?);
    strips.insert(Direction::NE, cut(0, c - h, halo, halo)?);
    strips.insert(Direction::NW, cut(0, 0, halo, halo)?);
    strips.insert(Direction::SE, cut(r - h, c - h, halo, halo)?);
    strips.insert(Direction::SW, cut(r - h, 0, halo, halo)?);
    Ok(strips)
}

/// Destination rectangle, in halo-extended input coordinates, for a strip
/// received from the neighbor in direction `dir`.
fn halo_slot(
    dir: Direction,
    halo: usize,
    rows: usize,
    cols: usize,
) -> (usize, usize, usize, usize) {
    let (r1, c1) = (halo + rows, halo + cols);
    match dir {
        Direction::N => (0, halo, halo, cols),
        Direction::S => (r1, halo, halo, cols),
        Direction::E => (halo, c1, rows, halo),
        Direction::W => (halo, 0, rows, halo),
        Direction::NE => (0, c1, halo, halo),
        Direction::NW => (0, 0, halo, halo),
        Direction::SE => (r1, c1, halo, halo),
        Direction::SW => (r1, 0, halo, halo),
    }
}

/// Build the halo-extended network input from a rank's own core and the
/// strips received from its neighbors; absent directions (physical
/// boundaries) stay zero.
pub fn build_local_input(core: &Tensor3, received: &StripMap, halo: usize) -> Result<Tensor3> {
    let (c, rows, cols) = core.shape();
    let mut input = Tensor3::zeros(c, rows + 2 * halo, cols + 2 * halo);
    let mut blit = |src: &Tensor3, row0: usize, col0: usize| -> Result<()> {
        for ch in 0..c {
            for i in 0..src.h() {
                let dst = input.row_mut(ch, row0 + i);
                dst[col0..col0 + src.w()].copy_from_slice(src.row(ch, i));
            }
        }
        Ok(())
    };
    blit(core, halo, halo)?;
    for (dir, strip) in received {
        let (row0, col0, nr, nc) = halo_slot(*dir, halo, rows, cols);
        if strip.shape() != (c, nr, nc) {
            return Err(Error::ShapeMismatch(format!(
                "strip from {dir} has shape {:?}, slot needs ({c}, {nr}, {nc})",
                strip.shape()
            )));
        }
        blit(strip, row0, col0)?;
    }
    Ok(input)
}

/// Place every rank's core-sized tensor at its core rectangle, inverting
/// the decomposition.
pub fn assemble(outputs: &BTreeMap<usize, Tensor3>, p: &Partition) -> Result<Tensor3> {
    let c = outputs
        .values()
        .next()
        .map(Tensor3::c)
        .ok_or(Error::MissingRank(0))?;
    let mut global = Tensor3::zeros(c, p.global_h, p.global_w);
    for spec in &p.ranks {
        let t = outputs
            .get(&spec.rank)
            .ok_or(Error::MissingRank(spec.rank))?;
        if t.shape() != (c, spec.rows, spec.cols) {
            return Err(Error::ShapeMismatch(format!(
                "rank {} output has shape {:?}, core is ({c}, {}, {})",
                spec.rank,
                t.shape(),
                spec.rows,
                spec.cols
            )));
        }
        for ch in 0..c {
            for i in 0..spec.rows {
                let dst = global.row_mut(ch, spec.row0 + i);
                dst[spec.col0..spec.col0 + spec.cols].copy_from_slice(t.row(ch, i));
            }
        }
    }
    Ok(global)
}

/// Split a global tensor into per-rank cores (the inverse of [`assemble`]).
pub fn split_cores(t: &Tensor3, p: &Partition) -> Result<BTreeMap<usize, Tensor3>> {
    check_global_shape(t, p.global_h, p.global_w)?;
    p.ranks
        .iter()
        .map(|spec| Ok((spec.rank, extract_core(t, spec)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor3::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn strategy_halos_derive_from_the_schedule() {
        assert_eq!(PaddingStrategy::ZeroInner.halo(), 2);
        assert_eq!(PaddingStrategy::ExactHalo.halo(), 8);
    }

    #[test]
    fn strategy_parses_cli_names() {
        assert_eq!(
            "zero-inner".parse::<PaddingStrategy>().unwrap(),
            PaddingStrategy::ZeroInner
        );
        assert_eq!(
            "exact-halo".parse::<PaddingStrategy>().unwrap(),
            PaddingStrategy::ExactHalo
        );
        assert!("same".parse::<PaddingStrategy>().is_err());
    }

    #[test]
    fn two_by_two_of_ten_gives_four_quarter_cores() {
        let p = make_partition(10, 10, 2, 2, PaddingStrategy::ZeroInner).unwrap();
        assert_eq!(p.n_ranks(), 4);
        let corners: Vec<(usize, usize)> = p.ranks.iter().map(|r| (r.row0, r.col0)).collect();
        assert_eq!(corners, vec![(0, 0), (0, 5), (5, 0), (5, 5)]);
        for r in &p.ranks {
            assert_eq!(r.rows * r.cols, 25);
        }
        // Rank 0 touches rank 1 east, rank 2 south, rank 3 southeast.
        assert_eq!(p.ranks[0].neighbors.e, Some(1));
        assert_eq!(p.ranks[0].neighbors.s, Some(2));
        assert_eq!(p.ranks[0].neighbors.se, Some(3));
        assert_eq!(p.ranks[0].neighbors.n, None);
        assert_eq!(p.ranks[0].neighbors.count(), 3);
    }

    #[test]
    fn eight_by_eight_of_256_matches_the_scaling_layout() {
        let p = make_partition(256, 256, 8, 8, PaddingStrategy::ExactHalo).unwrap();
        assert_eq!(p.n_ranks(), 64);
        assert!(p.ranks.iter().all(|r| r.rows == 32 && r.cols == 32));
    }

    #[test]
    fn single_rank_has_no_neighbors() {
        let p = make_partition(8, 8, 1, 1, PaddingStrategy::ZeroInner).unwrap();
        assert_eq!(p.n_ranks(), 1);
        assert_eq!(p.ranks[0].neighbors, Neighbors::default());
        assert_eq!(p.messages_per_step(), 0);
    }

    #[test]
    fn ragged_split_rejected_with_divisor_list() {
        let err = make_partition(10, 10, 3, 2, PaddingStrategy::ZeroInner).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 5, 10]"), "message was: {msg}");
    }

    #[test]
    fn interior_rank_extract_is_a_plain_window() {
        let t = random_tensor(4, 12, 12, 1);
        let p = make_partition(12, 12, 3, 3, PaddingStrategy::ZeroInner).unwrap();
        let center = &p.ranks[4];
        let got = extract_input(&t, center, 2).unwrap();
        let want = slice_region(
            &t,
            center.row0 as i64 - 2,
            center.col0 as i64 - 2,
            center.rows + 4,
            center.cols + 4,
            OutOfBoundsPolicy::Strict,
        )
        .unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn corner_rank_extract_mixes_zero_and_neighbor_cells() {
        let t = random_tensor(4, 8, 8, 2);
        let p = make_partition(8, 8, 2, 2, PaddingStrategy::ZeroInner).unwrap();
        let nw = &p.ranks[0];
        let x = extract_input(&t, nw, 2).unwrap();
        assert_eq!(x.shape(), (4, 8, 8));
        for ch in 0..4 {
            // Beyond the physical boundary: zero.
            assert!(x.row(ch, 0).iter().all(|&v| v == 0.0));
            assert_eq!(x.get(ch, 3, 0), 0.0);
            // Into the neighbors: global data.
            assert_eq!(x.get(ch, 2, 6), t.get(ch, 0, 4));
            assert_eq!(x.get(ch, 6, 2), t.get(ch, 4, 0));
            assert_eq!(x.get(ch, 6, 6), t.get(ch, 4, 4));
        }
    }

    #[test]
    fn extract_with_zero_halo_is_the_core_slice() {
        let t = random_tensor(4, 8, 8, 3);
        let p = make_partition(8, 8, 2, 2, PaddingStrategy::ZeroInner).unwrap();
        for spec in &p.ranks {
            assert_eq!(
                extract_input(&t, spec, 0).unwrap(),
                extract_core(&t, spec).unwrap()
            );
        }
    }

    #[test]
    fn core_parts_of_extracted_inputs_reassemble_the_global_tensor() {
        let t = random_tensor(4, 12, 8, 4);
        let p = make_partition(12, 8, 2, 3, PaddingStrategy::ZeroInner).unwrap();
        let halo = p.halo;
        let cores: BTreeMap<usize, Tensor3> = p
            .ranks
            .iter()
            .map(|spec| {
                let ext = extract_input(&t, spec, halo).unwrap();
                let core = slice_region(
                    &ext,
                    halo as i64,
                    halo as i64,
                    spec.rows,
                    spec.cols,
                    OutOfBoundsPolicy::Strict,
                )
                .unwrap();
                (spec.rank, core)
            })
            .collect();
        assert_eq!(assemble(&cores, &p).unwrap(), t);
    }

    #[test]
    fn strip_indexing_matches_the_definition() {
        let t = random_tensor(4, 4, 4, 5);
        let strips = halo_strips(&t, 1).unwrap();
        let n = &strips[&Direction::N];
        assert_eq!(n.shape(), (4, 1, 4));
        for ch in 0..4 {
            assert_eq!(n.row(ch, 0), t.row(ch, 0));
        }
        let ne = &strips[&Direction::NE];
        assert_eq!(ne.shape(), (4, 1, 1));
        assert_eq!(ne.get(0, 0, 0), t.get(0, 0, 3));
    }

    #[test]
    fn strips_of_a_constant_tensor_are_constant() {
        let t = Tensor3::from_vec(4, 6, 6, vec![0.75; 144]).unwrap();
        for strip in halo_strips(&t, 2).unwrap().values() {
            assert!(strip.iter().all(|&v| v == 0.75));
        }
    }

    #[test]
    fn oversized_halo_rejected() {
        let t = Tensor3::zeros(4, 4, 4);
        assert!(halo_strips(&t, 5).is_err());
        assert!(halo_strips(&t, 0).is_err());
    }

    #[test]
    fn sent_strip_equals_what_the_neighbor_reads_from_the_global_tensor() {
        let t = random_tensor(4, 8, 8, 6);
        let p = make_partition(8, 8, 2, 2, PaddingStrategy::ZeroInner).unwrap();
        let halo = 2;
        let a = &p.ranks[0];
        let b = &p.ranks[1];
        let a_core = extract_core(&t, a).unwrap();
        let a_strips = halo_strips(&a_core, halo).unwrap();
        // B's western halo in its training view must equal A's eastern strip.
        let b_input = extract_input(&t, b, halo).unwrap();
        let west_slot = slice_region(
            &b_input,
            halo as i64,
            0,
            b.rows,
            halo,
            OutOfBoundsPolicy::Strict,
        )
        .unwrap();
        assert_eq!(a_strips[&Direction::E], west_slot);
    }

    #[test]
    fn exchanged_strips_rebuild_the_training_view() {
        // Receiving mirror-direction strips from every neighbor must produce
        // exactly the halo-extended input that training extracts globally.
        let t = random_tensor(4, 12, 12, 7);
        let p = make_partition(12, 12, 3, 3, PaddingStrategy::ZeroInner).unwrap();
        let halo = p.halo;
        let cores = split_cores(&t, &p).unwrap();
        for spec in &p.ranks {
            let mut received = BTreeMap::new();
            for (dir, neighbor) in spec.neighbors.present() {
                let their_strips = halo_strips(&cores[&neighbor], halo).unwrap();
                received.insert(dir, their_strips[&dir.mirror()].clone());
            }
            let built = build_local_input(&cores[&spec.rank], &received, halo).unwrap();
            let reference = extract_input(&t, spec, halo).unwrap();
            assert_eq!(built, reference, "rank {}", spec.rank);
        }
    }

    #[test]
    fn assemble_split_round_trip() {
        let t = random_tensor(4, 10, 10, 8);
        let p = make_partition(10, 10, 2, 2, PaddingStrategy::ZeroInner).unwrap();
        let cores = split_cores(&t, &p).unwrap();
        assert_eq!(assemble(&cores, &p).unwrap(), t);

        let single = make_partition(10, 10, 1, 1, PaddingStrategy::ZeroInner).unwrap();
        let whole = split_cores(&t, &single).unwrap();
        assert_eq!(assemble(&whole, &single).unwrap(), t);
    }

    #[test]
    fn assemble_reports_missing_rank_and_bad_shape() {
        let t = random_tensor(4, 10, 10, 9);
        let p = make_partition(10, 10, 2, 2, PaddingStrategy::ZeroInner).unwrap();
        let mut cores = split_cores(&t, &p).unwrap();
        cores.remove(&2);
        assert!(matches!(assemble(&cores, &p), Err(Error::MissingRank(2))));

        let mut bad = split_cores(&t, &p).unwrap();
        bad.insert(3, Tensor3::zeros(4, 2, 2));
        assert!(matches!(assemble(&bad, &p), Err(Error::ShapeMismatch(_))));
    }

    proptest! {
        #[test]
        fn partition_tiles_and_neighbors_are_symmetric(
            px in 1usize..6,
            py in 1usize..6,
            cell_h in 1usize..5,
            cell_w in 1usize..5,
        ) {
            let (gh, gw) = (py * cell_h, px * cell_w);
            let p = make_partition(gh, gw, px, py, PaddingStrategy::ZeroInner).unwrap();

            // Cores tile the grid disjointly.
            let mut covered = vec![0u32; gh * gw];
            let mut area = 0;
            for spec in &p.ranks {
                area += spec.rows * spec.cols;
                for i in 0..spec.rows {
                    for j in 0..spec.cols {
                        covered[(spec.row0 + i) * gw + (spec.col0 + j)] += 1;
                    }
                }
            }
            prop_assert_eq!(area, gh * gw);
            prop_assert!(covered.iter().all(|&c| c == 1));

            // Neighbor relation is symmetric and boundaries sit at edges.
            for spec in &p.ranks {
                let (ry, rx) = (spec.rank / px, spec.rank % px);
                for dir in Direction::ALL {
                    let (dr, dc) = dir.offset();
                    let inside = {
                        let (nry, nrx) = (ry as i64 + dr, rx as i64 + dc);
                        nry >= 0 && nrx >= 0 && nry < py as i64 && nrx < px as i64
                    };
                    match spec.neighbors.get(dir) {
                        Some(other) => {
                            prop_assert!(inside);
                            prop_assert_eq!(
                                p.ranks[other].neighbors.get(dir.mirror()),
                                Some(spec.rank)
                            );
                        }
                        None => prop_assert!(!inside),
                    }
                }
            }
        }
    }
}
