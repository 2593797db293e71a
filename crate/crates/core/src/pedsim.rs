//! Synthetic ground truth: founder haplotypes with block LD, gene dropping
//! through multi-generation pedigrees, family sampling and phenotypes.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::{GenotypePanel, ScaledPanel, SnpMeta};
use crate::grm::{expected_relationship_table, MatrixKind, Pedigree, PedigreeMember, RelationshipMatrix};
use crate::reml::PhenotypeVector;
use crate::scalar::Real;
use crate::stream_rng;

const TAG_POOL: u64 = 1 << 40;
const TAG_HAPLOTYPE: u64 = 2 << 40;
const TAG_FAMILY: u64 = 3 << 40;
const TAG_PHENOTYPE: u64 = 4 << 40;
const MAX_BLOCK_LEN: usize = 64;
/// Degrees above this are treated as equal when weighting samples.
const R_CAP: f64 = 12.0;
const SAMPLING_ATTEMPTS: usize = 200;

/// Parameters of the founder haplotype model.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolParams {
    pub chromosomes: usize,
    pub snps_per_chromosome: usize,
    /// Mean of the geometric block-length distribution (at least 1).
    pub mean_block_len: f64,
    /// Number of distinct patterns each block is drawn from.
    pub pool_size: usize,
    /// Minor allele frequencies are drawn uniformly from this range.
    pub maf_range: (f64, f64),
    /// Base pairs between adjacent SNPs.
    pub position_step: u64,
}

impl Default for PoolParams {
    fn default() -> Self {
        Self {
            chromosomes: 20,
            snps_per_chromosome: 3000,
            mean_block_len: 4.0,
            pool_size: 6,
            maf_range: (0.05, 0.5),
            position_step: 1000,
        }
    }
}

impl PoolParams {
    pub fn n_snps(&self) -> usize {
        self.chromosomes * self.snps_per_chromosome
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Simulation(m));
        if self.chromosomes == 0 || self.snps_per_chromosome == 0 {
            return bad("genome needs at least one chromosome and one SNP".into());
        }
        if self.chromosomes > u32::MAX as usize || self.snps_per_chromosome > u32::MAX as usize {
            return bad("genome too large".into());
        }
        if !(self.mean_block_len >= 1.0) || !self.mean_block_len.is_finite() {
            return bad(format!("mean block length must be >= 1, got {}", self.mean_block_len));
        }
        if self.pool_size == 0 {
            return bad("pattern pool size must be positive".into());
        }
        let (lo, hi) = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return bad(format!(
                "allele frequency range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 0.5"
            ));
        }
        Ok(())
    }
}

/// Founder haplotypes, bit-packed, one row of `words` u64 per haplotype.
#[derive(Debug, Clone)]
pub struct HaplotypePool {
    bits: Vec<u64>,
    words: usize,
    n_haplotypes: usize,
    snps: Vec<SnpMeta>,
    blocks: Vec<(usize, usize)>,
    snps_per_chromosome: usize,
    allele_freqs: Vec<f64>,
}

impl HaplotypePool {
    pub fn len(&self) -> usize {
        self.n_haplotypes
    }

    pub fn is_empty(&self) -> bool {
        self.n_haplotypes == 0
    }

    pub fn n_snps(&self) -> usize {
        self.snps.len()
    }

    pub fn snps(&self) -> &[SnpMeta] {
        &self.snps
    }

    /// LD blocks as half-open `(start, end)` SNP ranges; they partition the
    /// genome and never cross a chromosome boundary.
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// Allele frequencies the patterns were drawn with.
    pub fn allele_freqs(&self) -> &[f64] {
        &self.allele_freqs
    }

    pub fn chromosomes(&self) -> usize {
        self.snps.len() / self.snps_per_chromosome
    }

    pub fn snps_per_chromosome(&self) -> usize {
        self.snps_per_chromosome
    }

    /// Allele (0 or 1) of haplotype `h` at SNP `k`.
    pub fn allele(&self, h: usize, k: usize) -> u8 {
        ((self.bits[h * self.words + k / 64] >> (k % 64)) & 1) as u8
    }
}

fn draw_pattern(freqs: &[f64], rng: &mut impl Rng) -> u64 {
    freqs.iter().enumerate().fold(
        0u64,
        |acc, (b, &p)| if rng.random_bool(p) { acc | (1 << b) } else { acc },
    )
}

/// Generates `n_haplotypes` founder haplotypes. Each block of `L` SNPs
/// takes one of a small set of patterns: every pattern with its
/// product-Bernoulli weight when `2^L <= pool_size` (no LD), otherwise
/// `pool_size` patterns drawn from the product measure with equal weights.
pub fn generate_founders(params: &PoolParams, n_haplotypes: usize, seed: u64) -> Result<HaplotypePool> {
    params.validate()?;
    let mut rng = stream_rng(seed, TAG_POOL);
    let m = params.n_snps();
    let words = m.div_ceil(64);
    let geometric = Geometric::new(1.0 / params.mean_block_len)
        .map_err(|e| Error::Simulation(format!("block length distribution: {e}")))?;

    let mut snps = Vec::with_capacity(m);
    let mut blocks = Vec::new();
    for c in 0..params.chromosomes {
        let start = c * params.snps_per_chromosome;
        for k in 0..params.snps_per_chromosome {
            snps.push(SnpMeta::new(
                format!("c{}s{}", c + 1, k + 1),
                c as u32 + 1,
                (k as u64 + 1) * params.position_step,
            ));
        }
        let end = start + params.snps_per_chromosome;
        let mut s = start;
        while s < end {
            let len = (1 + geometric.sample(&mut rng) as usize)
                .min(MAX_BLOCK_LEN)
                .min(end - s);
            blocks.push((s, s + len));
            s += len;
        }
    }
    let (lo, hi) = params.maf_range;
    let allele_freqs: Vec<f64> = (0..m).map(|_| rng.random_range(lo..=hi)).collect();

    struct BlockPatterns {
        patterns: Vec<u64>,
        weights: WeightedIndex<f64>,
    }
    let mut block_patterns = Vec::with_capacity(blocks.len());
    for &(s, e) in &blocks {
        let freqs = &allele_freqs[s..e];
        let len = e - s;
        let (patterns, weights): (Vec<u64>, Vec<f64>) = if len < 20 && (1usize << len) <= params.pool_size {
            (0..1u64 << len)
                .map(|pat| {
                    let w: f64 = freqs
                        .iter()
                        .enumerate()
                        .map(|(b, &p)| if pat >> b & 1 == 1 { p } else { 1.0 - p })
                        .product();
                    (pat, w)
                })
                .unzip()
        } else {
            (0..params.pool_size)
                .map(|_| (draw_pattern(freqs, &mut rng), 1.0))
                .unzip()
        };
        let weights = WeightedIndex::new(&weights).map_err(|e| Error::Simulation(format!("pattern weights: {e}")))?;
        block_patterns.push(BlockPatterns { patterns, weights });
    }

    let mut bits = vec![0u64; words * n_haplotypes];
    bits.par_chunks_mut(words.max(1)).enumerate().for_each(|(h, row)| {
        let mut rng = stream_rng(seed, TAG_HAPLOTYPE + h as u64);
        for (b, &(s, e)) in blocks.iter().enumerate() {
            let bp = &block_patterns[b];
            let pat = bp.patterns[bp.weights.sample(&mut rng)];
            for k in s..e {
                if pat >> (k - s) & 1 == 1 {
                    row[k / 64] |= 1 << (k % 64);
                }
            }
        }
    });
    Ok(HaplotypePool {
        bits,
        words,
        n_haplotypes,
        snps,
        blocks,
        snps_per_chromosome: params.snps_per_chromosome,
        allele_freqs,
    })
}

/// One haplotype as a mosaic of founder haplotypes: per chromosome, a list of
/// `(first SNP offset, pool haplotype)` segments in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Haplotype {
    pub segments: Vec<Vec<(u32, u32)>>,
}

impl Haplotype {
    fn founder(label: u32, chromosomes: usize) -> Self {
        Self {
            segments: vec![vec![(0, label)]; chromosomes],
        }
    }
}

/// Diploid genome as two haplotypes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genome {
    pub haplotypes: [Haplotype; 2],
}

/// Appends the part of `segs` covering `[from, to)` to `out`, merging equal
/// neighbours.
fn splice(out: &mut Vec<(u32, u32)>, segs: &[(u32, u32)], from: u32, to: u32) {
    let first = segs.partition_point(|&(s, _)| s <= from) - 1;
    let mut push = |start: u32, label: u32| {
        if out.last().is_none_or(|&(_, l)| l != label) {
            out.push((start, label));
        }
    };
    push(from, segs[first].1);
    for &(s, l) in &segs[first + 1..] {
        if s >= to {
            break;
        }
        push(s, l);
    }
}

/// One meiosis: a Poisson number of crossovers at uniform positions per
/// chromosome, starting from a random parental haplotype.
pub fn transmit(parent: &Genome, snps_per_chromosome: usize, recomb_rate: f64, rng: &mut impl Rng) -> Haplotype {
    let len = snps_per_chromosome as u32;
    let poisson = (recomb_rate > 0.0).then(|| Poisson::new(recomb_rate).expect("positive rate"));
    let segments = (0..parent.haplotypes[0].segments.len())
        .map(|c| {
            let mut current = usize::from(rng.random_bool(0.5));
            let mut breaks: Vec<u32> = match &poisson {
                Some(p) => {
                    let count = p.sample(rng) as usize;
                    (0..count).map(|_| (rng.random::<f64>() * len as f64) as u32).collect()
                }
                None => Vec::new(),
            };
            breaks.sort_unstable();
            breaks.retain(|&b| b > 0 && b < len);
            let mut out = Vec::new();
            let mut from = 0;
            for b in breaks.into_iter().chain(std::iter::once(len)) {
                if b > from {
                    splice(&mut out, &parent.haplotypes[current].segments[c], from, b);
                    from = b;
                }
                current = 1 - current;
            }
            out
        })
        .collect();
    Haplotype { segments }
}

/// Drops founder haplotypes through `pedigree`. Founders, in pedigree order,
/// take pool haplotypes `first_haplotype`, `first_haplotype + 1`, ... two at
/// a time.
pub fn drop_genomes(
    pool: &HaplotypePool,
    pedigree: &Pedigree,
    first_haplotype: usize,
    recomb_rate: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Genome>> {
    if !(recomb_rate >= 0.0) || !recomb_rate.is_finite() {
        return Err(Error::Simulation(format!(
            "recombination rate must be >= 0, got {recomb_rate}"
        )));
    }
    let n_founders = pedigree.founders().count();
    let needed = first_haplotype + 2 * n_founders;
    if needed > pool.len() {
        return Err(Error::Simulation(format!(
            "haplotype pool exhausted: {} founders need haplotypes up to {needed}, pool has {}",
            n_founders,
            pool.len()
        )));
    }
    let chroms = pool.chromosomes();
    let mut next = first_haplotype as u32;
    let mut genomes: Vec<Genome> = Vec::with_capacity(pedigree.len());
    for i in 0..pedigree.len() {
        let g = match pedigree.parents(i) {
            None => {
                let g = Genome {
                    haplotypes: [Haplotype::founder(next, chroms), Haplotype::founder(next + 1, chroms)],
                };
                next += 2;
                g
            }
            Some((f, m)) => {
                let hf = transmit(&genomes[f], pool.snps_per_chromosome(), recomb_rate, rng);
                let hm = transmit(&genomes[m], pool.snps_per_chromosome(), recomb_rate, rng);
                Genome { haplotypes: [hf, hm] }
            }
        };
        genomes.push(g);
    }
    Ok(genomes)
}

/// Number of positions in `[0, len)` where two segment lists carry the same
/// founder haplotype.
fn shared_length(a: &[(u32, u32)], b: &[(u32, u32)], len: u32) -> u64 {
    let (mut i, mut j) = (0, 0);
    let mut pos = 0u32;
    let mut shared = 0u64;
    while pos < len {
        let end_a = a.get(i + 1).map_or(len, |s| s.0);
        let end_b = b.get(j + 1).map_or(len, |s| s.0);
        let end = end_a.min(end_b);
        if a[i].1 == b[j].1 {
            shared += u64::from(end - pos);
        }
        pos = end;
        if end == end_a {
            i += 1;
        }
        if end == end_b {
            j += 1;
        }
    }
    shared
}

/// Realized relationship `2 phi` from identity-by-descent segments, where
/// `phi` is the probability that random alleles of the two genomes at a
/// random SNP descend from the same founder haplotype.
pub fn realized_relationship(a: &Genome, b: &Genome, snps_per_chromosome: usize) -> f64 {
    let len = snps_per_chromosome as u32;
    let chroms = a.haplotypes[0].segments.len();
    let mut shared = 0u64;
    for ha in &a.haplotypes {
        for hb in &b.haplotypes {
            for c in 0..chroms {
                shared += shared_length(&ha.segments[c], &hb.segments[c], len);
            }
        }
    }
    shared as f64 / (2.0 * (chroms * snps_per_chromosome) as f64)
}

/// Genotype (count of allele 1) of `genome` at every SNP of `pool`.
pub fn genotypes(pool: &HaplotypePool, genome: &Genome) -> Vec<u8> {
    let per = pool.snps_per_chromosome();
    let mut out = vec![0u8; pool.n_snps()];
    for h in &genome.haplotypes {
        for (c, segs) in h.segments.iter().enumerate() {
            for (s, &(start, label)) in segs.iter().enumerate() {
                let end = segs.get(s + 1).map_or(per, |x| x.0 as usize);
                for k in start as usize..end {
                    let g = c * per + k;
                    out[g] += pool.allele(label as usize, g);
                }
            }
        }
    }
    out
}

/// Family structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PedigreeDesign {
    /// Multi-generation lineage from one root couple; every married
    /// descendant takes a new founder as spouse. Members are sampled from the
    /// last two generations with bounded pairwise relatedness.
    #[default]
    Extended,
    /// One couple and `family_size` children; all children are sampled.
    Nuclear,
}

/// Simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub n_families: usize,
    pub family_size: usize,
    pub generations: usize,
    pub founders_per_family: usize,
    /// Children of each couple in the next-to-last generation.
    pub leaf_children: usize,
    /// Members per family eligible for sampling ("genotyped").
    pub candidates: usize,
    /// Largest relationship allowed between two sampled members.
    pub max_relatedness: f64,
    /// Expected crossovers per chromosome per meiosis.
    pub recomb_rate: f64,
    /// Members are drawn with weight `sampling_bias^(mean R)` against those
    /// already drawn; values above 1 favour distant relatives.
    pub sampling_bias: f64,
    pub causal_count: usize,
    pub h2_true: f64,
    pub rng_seed: u64,
    pub design: PedigreeDesign,
    pub pool: PoolParams,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n_families: 20,
            family_size: 10,
            generations: 7,
            founders_per_family: 39,
            leaf_children: 2,
            candidates: 20,
            max_relatedness: 0.125,
            recomb_rate: 1.0,
            sampling_bias: 2.0,
            causal_count: 1000,
            h2_true: 0.5,
            rng_seed: 0,
            design: PedigreeDesign::Extended,
            pool: PoolParams::default(),
        }
    }
}

impl SimulationSpec {
    /// Full-scale design: 100 ten-member families and a genome large enough
    /// for 100,000 common SNPs.
    pub fn paper() -> Self {
        Self {
            n_families: 100,
            pool: PoolParams {
                chromosomes: 22,
                snps_per_chromosome: 7000,
                ..PoolParams::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Simulation(m.to_string()));
        if self.n_families == 0 || self.family_size == 0 {
            return bad("family count and size must be positive");
        }
        if !(0.0..=1.0).contains(&self.h2_true) {
            return bad("h2_true must lie in [0, 1]");
        }
        if !(self.sampling_bias > 0.0) {
            return bad("sampling bias must be positive");
        }
        if self.design == PedigreeDesign::Extended {
            if self.generations < 3 {
                return bad("extended pedigrees need at least three generations");
            }
            if self.leaf_children == 0 {
                return bad("leaf_children must be positive");
            }
            if self.candidates < self.family_size {
                return bad("fewer candidates than family members to sample");
            }
        }
        self.pool.validate()
    }

    fn founders_in_family(&self) -> usize {
        match self.design {
            PedigreeDesign::Extended => self.founders_per_family,
            PedigreeDesign::Nuclear => 2,
        }
    }
}

/// Married descendants per generation (generations 2 .. G-1), growing
/// geometrically from 2 so that the total spouse count uses the founder
/// budget exactly.
fn married_counts(generations: usize, founders: usize) -> Result<Vec<usize>> {
    let k = generations - 2;
    if founders < 2 + k {
        return Err(Error::Simulation(format!(
            "{founders} founders cannot fill {generations} generations (need at least {})",
            2 + k
        )));
    }
    let budget = (founders - 2) as f64;
    let total = |r: f64| (0..k).map(|i| 2.0 * r.powi(i as i32)).sum::<f64>();
    let (mut lo, mut hi) = (0.0f64, 16.0f64);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if total(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ideal: Vec<f64> = (0..k).map(|i| 2.0 * lo.powi(i as i32)).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|&x| (x.floor() as usize).max(1)).collect();
    let target = founders - 2;
    while counts.iter().sum::<usize>() < target {
        let i = (0..k)
            .max_by(|&a, &b| {
                let fa = ideal[a] - counts[a] as f64;
                let fb = ideal[b] - counts[b] as f64;
                fa.partial_cmp(&fb).unwrap().then(a.cmp(&b))
            })
            .unwrap();
        counts[i] += 1;
    }
    while counts.iter().sum::<usize>() > target {
        let i = (0..k)
            .filter(|&i| counts[i] > 1)
            .min_by(|&a, &b| {
                let fa = ideal[a] - counts[a] as f64;
                let fb = ideal[b] - counts[b] as f64;
                fa.partial_cmp(&fb).unwrap().then(b.cmp(&a))
            })
            .expect("budget covers one per generation");
        counts[i] -= 1;
    }
    Ok(counts)
}

/// Members of one generated family.
#[derive(Debug, Clone)]
pub struct FamilyPedigree {
    pub members: Vec<PedigreeMember>,
    pub generation: Vec<usize>,
}

impl FamilyPedigree {
    fn push(&mut self, m: PedigreeMember, generation: usize) -> usize {
        self.members.push(m);
        self.generation.push(generation);
        self.members.len() - 1
    }
}

/// Builds one extended family. Ids are `{prefix}_{k}` in creation order.
pub fn extended_pedigree(
    prefix: &str,
    generations: usize,
    founders: usize,
    leaf_children: usize,
    rng: &mut impl Rng,
) -> Result<FamilyPedigree> {
    let counts = married_counts(generations, founders)?;
    let mut fam = FamilyPedigree {
        members: Vec::new(),
        generation: Vec::new(),
    };
    let id = |k: usize| format!("{prefix}_{}", k + 1);
    let a = fam.push(PedigreeMember::founder(id(0)), 1);
    let b = fam.push(PedigreeMember::founder(id(1)), 1);
    let mut couples = vec![(a, b)];
    for g in 2..=generations {
        let per_couple: Vec<usize> = if g == generations {
            vec![leaf_children; couples.len()]
        } else {
            let c = counts[g - 2];
            let mut alloc = vec![0usize; couples.len()];
            if c >= couples.len() {
                alloc.iter_mut().for_each(|x| *x = 1);
                for _ in couples.len()..c {
                    alloc[rng.random_range(0..couples.len())] += 1;
                }
            } else {
                let mut idx: Vec<usize> = (0..couples.len()).collect();
                idx.shuffle(rng);
                for &i in &idx[..c] {
                    alloc[i] = 1;
                }
            }
            alloc
        };
        let mut next = Vec::new();
        for (&(f, m), &kids) in couples.iter().zip(&per_couple) {
            for _ in 0..kids {
                let (fid, mid) = (fam.members[f].id.clone(), fam.members[m].id.clone());
                let child = fam.push(PedigreeMember::child(id(fam.members.len()), fid, mid), g);
                if g < generations {
                    let spouse = fam.push(PedigreeMember::founder(id(fam.members.len())), g);
                    next.push(if rng.random_bool(0.5) {
                        (child, spouse)
                    } else {
                        (spouse, child)
                    });
                }
            }
        }
        couples = next;
    }
    Ok(fam)
}

/// Builds one nuclear family: a couple and `children` offspring.
pub fn nuclear_pedigree(prefix: &str, children: usize) -> FamilyPedigree {
    let id = |k: usize| format!("{prefix}_{}", k + 1);
    let mut fam = FamilyPedigree {
        members: Vec::new(),
        generation: Vec::new(),
    };
    fam.push(PedigreeMember::founder(id(0)), 1);
    fam.push(PedigreeMember::founder(id(1)), 1);
    for k in 0..children {
        fam.push(PedigreeMember::child(id(k + 2), id(0), id(1)), 2);
    }
    fam
}

/// Draws `size` of `candidates` one at a time, each eligible member (all
/// relationships to those already drawn at most `max_rel`) weighted by
/// `bias^(mean R)` with `R = -log2 A` capped at 12.
pub fn sample_members(
    a: &[Vec<f64>],
    candidates: &[usize],
    size: usize,
    max_rel: f64,
    bias: f64,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let degree = |v: f64| if v > 0.0 { (-v.log2()).min(R_CAP) } else { R_CAP };
    'attempt: for _ in 0..SAMPLING_ATTEMPTS {
        let mut chosen: Vec<usize> = Vec::with_capacity(size);
        match candidates.choose(rng) {
            Some(&c) => chosen.push(c),
            None => break,
        }
        while chosen.len() < size {
            let eligible: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&c| !chosen.contains(&c) && chosen.iter().all(|&s| a[c][s] <= max_rel))
                .collect();
            if eligible.is_empty() {
                continue 'attempt;
            }
            let weights: Vec<f64> = eligible
                .iter()
                .map(|&c| {
                    let mean_r = chosen.iter().map(|&s| degree(a[c][s])).sum::<f64>() / chosen.len() as f64;
                    bias.powf(mean_r)
                })
                .collect();
            let pick = WeightedIndex::new(&weights).map_err(|e| Error::Simulation(e.to_string()))?;
            chosen.push(eligible[pick.sample(rng)]);
        }
        return Ok(chosen);
    }
    Err(Error::Simulation(format!(
        "cannot sample {size} members with pairwise relationship <= {max_rel}"
    )))
}

/// Output of [`simulate_panel`].
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: GenotypePanel,
    /// Pedigree-expected relationships of the sampled members.
    pub truth: RelationshipMatrix<f64>,
    /// Realized identity-by-descent relationships of the sampled members.
    pub realized: RelationshipMatrix<f64>,
    /// All families, members in topological order.
    pub pedigree: Pedigree,
    /// Pedigree index of each panel sample.
    pub sampled: Vec<usize>,
    /// Family index of each panel sample.
    pub family: Vec<usize>,
}

struct FamilyOutput {
    members: Vec<PedigreeMember>,
    sampled_ids: Vec<String>,
    truth: DMatrix<f64>,
    realized: DMatrix<f64>,
    genotypes: Vec<Vec<u8>>,
}

fn simulate_family(spec: &SimulationSpec, pool: &HaplotypePool, f: usize) -> Result<FamilyOutput> {
    let mut rng: ChaCha8Rng = stream_rng(spec.rng_seed, TAG_FAMILY + f as u64);
    let prefix = format!("F{:03}", f + 1);
    let fam = match spec.design {
        PedigreeDesign::Extended => extended_pedigree(
            &prefix,
            spec.generations,
            spec.founders_per_family,
            spec.leaf_children,
            &mut rng,
        )?,
        PedigreeDesign::Nuclear => nuclear_pedigree(&prefix, spec.family_size),
    };
    let ped = Pedigree::new(fam.members.clone())?;
    let table = expected_relationship_table::<f64>(&ped);

    let chosen: Vec<usize> = match spec.design {
        PedigreeDesign::Nuclear => (0..ped.len()).filter(|&i| ped.parents(i).is_some()).collect(),
        PedigreeDesign::Extended => {
            let last = spec.generations;
            let mut pool_idx: Vec<usize> = (0..fam.members.len())
                .filter(|&k| fam.generation[k] + 1 >= last && fam.members[k].father.is_some())
                .map(|k| ped.index_of(&fam.members[k].id).expect("member present"))
                .collect();
            let mut result = None;
            for _ in 0..20 {
                pool_idx.shuffle(&mut rng);
                let highlighted = &pool_idx[..spec.candidates.min(pool_idx.len())];
                match sample_members(
                    &table,
                    highlighted,
                    spec.family_size,
                    spec.max_relatedness,
                    spec.sampling_bias,
                    &mut rng,
                ) {
                    Ok(c) => {
                        result = Some(c);
                        break;
                    }
                    Err(_) => continue,
                }
            }
            result.ok_or_else(|| {
                Error::Simulation(format!(
                    "family {prefix}: cannot sample {} members with pairwise relationship <= {}",
                    spec.family_size, spec.max_relatedness
                ))
            })?
        }
    };

    let first = 2 * spec.founders_in_family() * f;
    let genomes = drop_genomes(pool, &ped, first, spec.recomb_rate, &mut rng)?;
    let n = chosen.len();
    let truth = DMatrix::from_fn(n, n, |i, j| table[chosen[i]][chosen[j]]);
    let per = pool.snps_per_chromosome();
    let realized = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            realized_relationship(&genomes[chosen[i]], &genomes[chosen[j]], per)
        }
    });
    Ok(FamilyOutput {
        members: ped.members().to_vec(),
        sampled_ids: chosen.iter().map(|&i| ped.members()[i].id.clone()).collect(),
        truth,
        realized,
        genotypes: chosen.iter().map(|&i| genotypes(pool, &genomes[i])).collect(),
    })
}

/// Simulates `n_families` independent families, drops genomes through them,
/// samples members, and assembles the genotype panel with its block-diagonal
/// truth matrix.
pub fn simulate_panel(spec: &SimulationSpec) -> Result<SimulatedPanel> {
    spec.validate()?;
    let n_haps = 2 * spec.founders_in_family() * spec.n_families;
    let pool = generate_founders(&spec.pool, n_haps, spec.rng_seed)?;
    let families = (0..spec.n_families)
        .into_par_iter()
        .map(|f| simulate_family(spec, &pool, f))
        .collect::<Result<Vec<_>>>()?;

    let n: usize = families.iter().map(|f| f.sampled_ids.len()).sum();
    let m = pool.n_snps();
    let mut truth = DMatrix::zeros(n, n);
    let mut realized = DMatrix::zeros(n, n);
    let mut counts = vec![0u8; n * m];
    let mut ids = Vec::with_capacity(n);
    let mut family = Vec::with_capacity(n);
    let mut members = Vec::new();
    let mut offset = 0;
    for (f, out) in families.into_iter().enumerate() {
        let s = out.sampled_ids.len();
        truth.view_mut((offset, offset), (s, s)).copy_from(&out.truth);
        realized.view_mut((offset, offset), (s, s)).copy_from(&out.realized);
        for (i, g) in out.genotypes.iter().enumerate() {
            for (k, &v) in g.iter().enumerate() {
                counts[k * n + offset + i] = v;
            }
        }
        ids.extend(out.sampled_ids);
        family.extend(std::iter::repeat_n(f, s));
        members.extend(out.members);
        offset += s;
    }
    let pedigree = Pedigree::new(members)?;
    let sampled = ids
        .iter()
        .map(|id| pedigree.index_of(id).expect("sampled member in pedigree"))
        .collect();
    let panel = GenotypePanel::new(ids.clone(), pool.snps().to_vec(), counts)?;
    Ok(SimulatedPanel {
        panel,
        truth: RelationshipMatrix::new(truth, ids.clone(), MatrixKind::Truth)?,
        realized: RelationshipMatrix::symmetrized(realized, ids, MatrixKind::Truth)?,
        pedigree,
        sampled,
        family,
    })
}

/// Polygenic phenotype `y = Z_c u + e` on `causal_count` SNPs drawn
/// uniformly from `z`, with `u ~ N(0, sigma_u^2)` scaled so the genetic
/// share of variance is `h2` in expectation and `e ~ N(0, 1 - h2)`.
/// Returns the phenotype and the causal SNP indices.
pub fn simulate_phenotype<T: Real>(
    z: &ScaledPanel<T>,
    causal_count: usize,
    h2: f64,
    rng: &mut impl Rng,
) -> Result<(PhenotypeVector<T>, Vec<usize>)> {
    let m = z.n_snps();
    if causal_count == 0 || causal_count > m {
        return Err(Error::Simulation(format!(
            "causal SNP count {causal_count} must lie in 1..={m}"
        )));
    }
    if !(0.0..=1.0).contains(&h2) {
        return Err(Error::Simulation(format!("h2 must lie in [0, 1], got {h2}")));
    }
    let mut causal = rand::seq::index::sample(rng, m, causal_count).into_vec();
    causal.sort_unstable();
    let n = z.n_samples();
    let mean_sq = causal
        .iter()
        .map(|&k| z.z.column(k).iter().map(|v| v.as_f64().powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n * causal_count) as f64;
    let sigma_u2 = if mean_sq > 0.0 {
        h2 / (causal_count as f64 * mean_sq)
    } else {
        0.0
    };
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let u: Vec<f64> = (0..causal_count).map(|_| unit.sample(rng) * sigma_u2.sqrt()).collect();
    let sd_e = (1.0 - h2).sqrt();
    let y: Vec<T> = (0..n)
        .map(|i| {
            let g: f64 = causal.iter().zip(&u).map(|(&k, &uj)| z.z[(i, k)].as_f64() * uj).sum();
            T::lit(g + sd_e * unit.sample(rng))
        })
        .collect();
    Ok((PhenotypeVector::new(y, z.sample_ids.clone())?, causal))
}

/// Breeding values under the infinitesimal model: founders `N(0, h2)`,
/// offspring the parental mean plus `N(0, h2 / 2)`, so `Cov = h2 A`.
pub fn pedigree_breeding_values(pedigree: &Pedigree, h2: f64, rng: &mut impl Rng) -> Vec<f64> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut g = vec![0.0; pedigree.len()];
    for i in 0..pedigree.len() {
        g[i] = match pedigree.parents(i) {
            None => h2.sqrt() * unit.sample(rng),
            Some((f, m)) => (g[f] + g[m]) / 2.0 + (h2 / 2.0).sqrt() * unit.sample(rng),
        };
    }
    g
}

/// Phenotypes `g + e` of the sampled members of `sim` under the
/// infinitesimal model with heritability `h2`; draws from stream `replicate`
/// of `seed`.
pub fn pedigree_phenotype(sim: &SimulatedPanel, h2: f64, seed: u64, replicate: u64) -> Result<PhenotypeVector<f64>> {
    if !(0.0..=1.0).contains(&h2) {
        return Err(Error::Simulation(format!("h2 must lie in [0, 1], got {h2}")));
    }
    let mut rng = stream_rng(seed, TAG_PHENOTYPE + replicate);
    let g = pedigree_breeding_values(&sim.pedigree, h2, &mut rng);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let sd_e = (1.0 - h2).sqrt();
    let y = sim
        .sampled
        .iter()
        .map(|&i| g[i] + sd_e * unit.sample(&mut rng))
        .collect();
    PhenotypeVector::new(y, sim.panel.sample_ids().to_vec())
}

/// Random stream for phenotype replicate `replicate` of `seed`.
pub fn phenotype_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    stream_rng(seed, TAG_PHENOTYPE + (1 << 32) + replicate)
}
