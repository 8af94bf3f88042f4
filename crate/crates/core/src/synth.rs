//! Seeded synthetic detection sets and perturbed variants for retrieval
//! benchmarks that run without a detector.
//!
//! A benchmark bundle holds one clean query fingerprint per base set and, per
//! perturbation level, `variants_per_base` perturbed copies of every base on
//! the index side. The target of base `b` is its first variant.
//!
//! All randomness comes from ChaCha8 streams seeded through a splitmix64 mix,
//! so bundles reproduce bit for bit across platforms.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ClassId, SubstructureKind};
use crate::detection::{parse_detections, write_detections, BoundingBox, DetectionInstance, DetectionSet};
use crate::error::{Error, Result};
use crate::evaluation::average_rank;
use crate::fingerprint::{fingerprint_detections, Hyperparams, Svmf};
use crate::io::atomic_write;
use crate::retrieval::FingerprintIndex;

pub const GENERATOR_ID: &str = "chacha8 (rand_chacha 0.3, rand 0.8 uniform sampling)";
pub const SEED_MIXING: &str = "base_seed = mix(seed, base); variant_seed = mix(mix(level.seed, seed), (base << 32) | variant); \
mix(a, b) = splitmix64(a ^ splitmix64(b))";

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Combines two seeds into one.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape of generated detection sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub min_instances: usize,
    pub max_instances: usize,
    pub class_pool: Vec<ClassId>,
    pub canvas_width: f64,
    pub canvas_height: f64,
    /// Box sides are drawn uniformly from 0.5x to 1.5x this size.
    pub mean_box_size: f64,
    /// Probability that a new box is placed overlapping an earlier one.
    pub overlap_density: f64,
}

impl SynthSpec {
    /// Molecule-like sets of 8 to 16 instances drawn from a small pool of
    /// twelve functional groups and four carbon backbones, so different
    /// bases share substructures.
    pub fn for_catalog(catalog: &Catalog) -> Self {
        Self::with_pool(catalog, 12, 4)
    }

    /// Default shape over the first `functional` functional groups and the
    /// first `carbon` carbon backbones of `catalog`. Smaller pools make bases
    /// more alike.
    pub fn with_pool(catalog: &Catalog, functional: usize, carbon: usize) -> Self {
        let pick = |kind, take| {
            catalog
                .classes()
                .iter()
                .filter(move |c| c.kind == kind)
                .map(|c| c.class_id)
                .take(take)
        };
        let class_pool = pick(SubstructureKind::FunctionalGroup, functional)
            .chain(pick(SubstructureKind::CarbonBackbone, carbon))
            .collect();
        SynthSpec {
            min_instances: 8,
            max_instances: 16,
            class_pool,
            canvas_width: 400.0,
            canvas_height: 300.0,
            mean_box_size: 40.0,
            overlap_density: 0.85,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_instances < 1 || self.min_instances > self.max_instances {
            return Err(Error::Validation(format!(
                "instance range {}..={} must be non-empty and start at >= 1",
                self.min_instances, self.max_instances
            )));
        }
        if self.class_pool.is_empty() {
            return Err(Error::Validation("class pool is empty".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.canvas_width) || !positive(self.canvas_height) {
            return Err(Error::Validation("canvas must be positive".into()));
        }
        if !positive(self.mean_box_size) {
            return Err(Error::Validation("mean box size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_density) {
            return Err(Error::Validation("overlap density must be in [0, 1]".into()));
        }
        let largest = 1.5 * self.mean_box_size;
        if largest > self.canvas_width || largest > self.canvas_height {
            return Err(Error::Generation(format!(
                "boxes up to {largest} px do not fit a {}x{} canvas",
                self.canvas_width, self.canvas_height
            )));
        }
        Ok(())
    }
}

/// Generates one detection set. Deterministic in `(spec, seed)`.
pub fn generate_base(spec: &SynthSpec, seed: u64) -> Result<DetectionSet> {
    spec.validate()?;
    let mut rng = rng(seed);
    let count = rng.gen_range(spec.min_instances..=spec.max_instances);
    let (cw, ch) = (spec.canvas_width, spec.canvas_height);
    let mut boxes: Vec<BoundingBox> = Vec::with_capacity(count);
    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let w = spec.mean_box_size * rng.gen_range(0.5..1.5);
        let h = spec.mean_box_size * rng.gen_range(0.5..1.5);
        let attach = i > 0 && rng.gen::<f64>() < spec.overlap_density;
        let (cx, cy) = if attach {
            let parent = boxes[rng.gen_range(0..i)];
            let (px, py) = (
                (parent.x_min + parent.x_max) / 2.0,
                (parent.y_min + parent.y_max) / 2.0,
            );
            // offsets below half the summed sides keep the two boxes overlapping,
            // and clamping the centre only moves it toward the parent
            let dx = rng.gen_range(-0.9..0.9) * (parent.width() + w) / 2.0;
            let dy = rng.gen_range(-0.9..0.9) * (parent.height() + h) / 2.0;
            (
                (px + dx).clamp(w / 2.0, cw - w / 2.0),
                (py + dy).clamp(h / 2.0, ch - h / 2.0),
            )
        } else {
            (
                rng.gen_range(w / 2.0..=cw - w / 2.0),
                rng.gen_range(h / 2.0..=ch - h / 2.0),
            )
        };
        let bbox = BoundingBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0);
        boxes.push(bbox);
        instances.push(DetectionInstance {
            instance_id: i as u64,
            class_id: spec.class_pool[rng.gen_range(0..spec.class_pool.len())],
            score: rng.gen_range(0.5..=1.0),
            bbox,
        });
    }
    Ok(DetectionSet::new(format!("synth-{seed:016x}"), instances))
}

/// Detection-space degradation applied independently to each instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub drop_prob: f64,
    pub substitute_prob: f64,
    /// Per-coordinate displacement bound as a fraction of the box diagonal.
    pub jitter_frac: f64,
    pub seed: u64,
}

impl PerturbationParams {
    pub fn identity() -> Self {
        PerturbationParams {
            drop_prob: 0.0,
            substitute_prob: 0.0,
            jitter_frac: 0.0,
            seed: 0,
        }
    }

    /// The three reference levels, weakest first.
    pub fn reference_levels() -> [PerturbationParams; 3] {
        let level = |p: f64, j: f64| PerturbationParams {
            drop_prob: p,
            substitute_prob: p,
            jitter_frac: j,
            seed: 0,
        };
        [level(0.02, 0.05), level(0.05, 0.10), level(0.10, 0.20)]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("drop_prob", self.drop_prob), ("substitute_prob", self.substitute_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} {p} outside [0, 1]")));
            }
        }
        if !(self.jitter_frac.is_finite() && self.jitter_frac >= 0.0) {
            return Err(Error::Validation(format!(
                "jitter_frac {} must be finite and >= 0",
                self.jitter_frac
            )));
        }
        Ok(())
    }
}

/// Drops, relabels and jitters instances. Substitute labels come from
/// `class_pool` minus the current label. The last instance is kept when every
/// earlier one has been dropped.
///
/// Every instance consumes the same random draws whatever the parameters, so
/// with a shared seed a stronger level perturbs a superset of what a weaker
/// level perturbs.
pub fn perturb(
    set: &DetectionSet,
    params: &PerturbationParams,
    class_pool: &[ClassId],
) -> Result<DetectionSet> {
    params.validate()?;
    let mut rng = rng(params.seed);
    let mut out = Vec::with_capacity(set.instances.len());
    let last = set.instances.len().saturating_sub(1);
    for (pos, inst) in set.instances.iter().enumerate() {
        let u_drop: f64 = rng.gen();
        let u_sub: f64 = rng.gen();
        let u_choice: f64 = rng.gen();
        let jitter: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));

        if u_drop < params.drop_prob && !(pos == last && out.is_empty()) {
            continue;
        }
        let mut inst = inst.clone();
        if u_sub < params.substitute_prob {
            let others: Vec<ClassId> = class_pool
                .iter()
                .copied()
                .filter(|&c| c != inst.class_id)
                .collect();
            if !others.is_empty() {
                let pick = ((u_choice * others.len() as f64) as usize).min(others.len() - 1);
                inst.class_id = others[pick];
            }
        }
        if params.jitter_frac > 0.0 {
            let step = params.jitter_frac * inst.bbox.diagonal();
            let b = inst.bbox;
            let (x0, y0) = (b.x_min + jitter[0] * step, b.y_min + jitter[1] * step);
            let (x1, y1) = (b.x_max + jitter[2] * step, b.y_max + jitter[3] * step);
            inst.bbox = BoundingBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1));
        }
        out.push(inst);
    }
    Ok(DetectionSet::new(set.image_key.clone(), out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub spec: SynthSpec,
    pub base_count: usize,
    pub variants_per_base: usize,
    pub levels: Vec<PerturbationParams>,
    pub seed: u64,
}

pub fn base_key(base: usize) -> String {
    format!("b{base:04}")
}

pub fn variant_key(base: usize, variant: usize) -> String {
    format!("b{base:04}-v{variant:04}")
}

pub fn level_name(level: usize) -> String {
    format!("level-{}", level + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkQuery {
    pub key: String,
    pub target_key: String,
    pub fingerprint: Svmf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLevel {
    pub name: String,
    pub file: String,
    pub params: PerturbationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestQuery {
    pub key: String,
    pub file: String,
    pub target_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub seed_mixing: String,
    pub seed: u64,
    pub catalog_size: u32,
    pub base_count: usize,
    pub variants_per_base: usize,
    pub spec: SynthSpec,
    pub hyperparams: Hyperparams,
    pub levels: Vec<ManifestLevel>,
    pub queries: Vec<ManifestQuery>,
}

/// Query fingerprints plus per-level index-side detection sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub manifest: Manifest,
    pub queries: Vec<BenchmarkQuery>,
    pub levels: Vec<Vec<DetectionSet>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub name: String,
    pub index_size: usize,
    pub average_rank: f64,
    pub ranks: Vec<usize>,
}

pub fn build_benchmark(
    config: &BenchmarkConfig,
    catalog: &Catalog,
    hp: &Hyperparams,
) -> Result<Benchmark> {
    if config.base_count < 1 || config.variants_per_base < 1 {
        return Err(Error::Validation(
            "base_count and variants_per_base must be >= 1".into(),
        ));
    }
    config.spec.validate()?;
    for class in &config.spec.class_pool {
        catalog.get(*class)?;
    }
    for level in &config.levels {
        level.validate()?;
    }
    hp.validate()?;

    let mut queries = Vec::with_capacity(config.base_count);
    let mut levels = vec![Vec::new(); config.levels.len()];
    for b in 0..config.base_count {
        let mut base = generate_base(&config.spec, mix_seed(config.seed, b as u64))?;
        base.image_key = base_key(b);
        queries.push(BenchmarkQuery {
            key: base_key(b),
            target_key: variant_key(b, 0),
            fingerprint: fingerprint_detections(&base, catalog, hp, 0.0)?,
        });
        for (l, level) in config.levels.iter().enumerate() {
            let level_seed = mix_seed(level.seed, config.seed);
            for v in 0..config.variants_per_base {
                let params = PerturbationParams {
                    seed: mix_seed(level_seed, ((b as u64) << 32) | v as u64),
                    ..*level
                };
                let mut variant = perturb(&base, &params, &config.spec.class_pool)?;
                variant.image_key = variant_key(b, v);
                levels[l].push(variant);
            }
        }
    }

    let manifest = Manifest {
        generator: GENERATOR_ID.into(),
        seed_mixing: SEED_MIXING.into(),
        seed: config.seed,
        catalog_size: catalog.n(),
        base_count: config.base_count,
        variants_per_base: config.variants_per_base,
        spec: config.spec.clone(),
        hyperparams: hp.clone(),
        levels: config
            .levels
            .iter()
            .enumerate()
            .map(|(l, params)| ManifestLevel {
                name: level_name(l),
                file: format!("index/{}.jsonl", level_name(l)),
                params: *params,
            })
            .collect(),
        queries: queries
            .iter()
            .map(|q| ManifestQuery {
                key: q.key.clone(),
                file: format!("queries/{}.svmf.json", q.key),
                target_key: q.target_key.clone(),
            })
            .collect(),
    };
    Ok(Benchmark {
        manifest,
        queries,
        levels,
    })
}

impl Benchmark {
    /// Fingerprints the index side of one level.
    pub fn level_index(
        &self,
        level: usize,
        catalog: &Catalog,
        hp: &Hyperparams,
        score_threshold: f64,
    ) -> Result<FingerprintIndex> {
        let sets = self
            .levels
            .get(level)
            .ok_or_else(|| Error::Lookup(format!("no level {level}")))?;
        let mut index = FingerprintIndex::with_dimension(catalog.n());
        for set in sets {
            index.add(set.image_key.clone(), fingerprint_detections(set, catalog, hp, score_threshold)?)?;
        }
        Ok(index)
    }

    /// Average target rank per level.
    pub fn evaluate(
        &self,
        catalog: &Catalog,
        hp: &Hyperparams,
        score_threshold: f64,
    ) -> Result<Vec<LevelResult>> {
        let pairs: Vec<(Svmf, String)> = self
            .queries
            .iter()
            .map(|q| (q.fingerprint.clone(), q.target_key.clone()))
            .collect();
        (0..self.levels.len())
            .map(|l| {
                let index = self.level_index(l, catalog, hp, score_threshold)?;
                let ranks = pairs
                    .iter()
                    .map(|(q, t)| index.rank_of(q, t))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LevelResult {
                    name: self.manifest.levels[l].name.clone(),
                    index_size: index.len(),
                    average_rank: average_rank(&pairs, &index)?,
                    ranks,
                })
            })
            .collect()
    }

    /// Writes `manifest.json`, `queries/<key>.svmf.json` and
    /// `index/level-<i>.jsonl` under `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("queries"))?;
        fs::create_dir_all(dir.join("index"))?;
        for (q, entry) in self.queries.iter().zip(&self.manifest.queries) {
            atomic_write(dir.join(&entry.file), format!("{}\n", q.fingerprint.to_json()).as_bytes())?;
        }
        for (sets, level) in self.levels.iter().zip(&self.manifest.levels) {
            atomic_write(dir.join(&level.file), write_detections(sets).as_bytes())?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Format(e.to_string()))?;
        atomic_write(dir.join("manifest.json"), format!("{manifest}\n").as_bytes())
    }

    pub fn read_from(dir: impl AsRef<Path>) -> Result<Benchmark> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)
            .map_err(|e| Error::Format(format!("manifest.json: {e}")))?;
        let queries = manifest
            .queries
            .iter()
            .map(|q| {
                let text = fs::read_to_string(dir.join(&q.file))?;
                Ok(BenchmarkQuery {
                    key: q.key.clone(),
                    target_key: q.target_key.clone(),
                    fingerprint: Svmf::from_json(text.trim())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let levels = manifest
            .levels
            .iter()
            .map(|l| parse_detections(BufReader::new(fs::File::open(dir.join(&l.file))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Benchmark {
            manifest,
            queries,
            levels,
        })
    }
}
