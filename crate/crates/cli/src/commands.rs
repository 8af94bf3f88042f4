use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svmf_core::detection::parse_detections_numbered;
use svmf_core::evaluation::{aggregate_detection_report, parse_eval_records};
use svmf_core::fingerprint::{SvmfJson, SVMF_MAGIC};
use svmf_core::io::atomic_write;
use svmf_core::synth::{build_benchmark, Benchmark, BenchmarkConfig, LevelResult, PerturbationParams, SynthSpec};
use svmf_core::{fingerprint_detections, Catalog, DetectionSet, FingerprintIndex, Hyperparams, Svmf};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::table::Table;

fn open(path: &Path) -> CliResult<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    atomic_write(path, bytes).map_err(|e| CliError::from(e).context(path.display()))
}

fn load_detections(path: &Path) -> CliResult<Vec<(usize, DetectionSet)>> {
    parse_detections_numbered(open(path)?).map_err(|e| CliError::from(e).context(path.display()))
}

/// Reads a fingerprint in either the binary or the JSON form.
fn load_fingerprint(path: &Path) -> CliResult<Svmf> {
    let bytes = read_bytes(path)?;
    let parsed = if bytes.starts_with(SVMF_MAGIC) {
        Svmf::decode(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::data(format!("{}: neither binary nor UTF-8 JSON", path.display())))?;
        Svmf::from_json(text.trim())
    };
    parsed.map_err(|e| CliError::from(e).context(path.display()))
}

fn load_index(path: &Path) -> CliResult<FingerprintIndex> {
    FingerprintIndex::load(path).map_err(|e| CliError::from(e).context(path.display()))
}

fn fingerprint_set(
    line: usize,
    set: &DetectionSet,
    catalog: &Catalog,
    hp: &Hyperparams,
    threshold: f64,
) -> CliResult<Svmf> {
    fingerprint_detections(set, catalog, hp, threshold).map_err(|e| CliError::from(e).context(format!("line {line}")))
}

pub fn fingerprint(args: &FingerprintArgs) -> CliResult<String> {
    let catalog = args.model.catalog()?;
    let hp = args.model.hyperparams(Hyperparams::default())?;
    let sets = load_detections(&args.input)?;
    let mut seen = HashSet::new();
    let mut outputs = Vec::with_capacity(sets.len());
    for (line, set) in &sets {
        let at = |e: CliError| e.context(format!("{}: line {line}", args.input.display()));
        check_file_key(&set.image_key).map_err(at)?;
        if !seen.insert(set.image_key.as_str()) {
            return Err(at(CliError::data(format!("duplicate image_key {:?}", set.image_key))));
        }
        let fp = fingerprint_set(*line, set, &catalog, &hp, args.model.score_threshold)
            .map_err(|e| e.context(args.input.display()))?;
        outputs.push((set.image_key.as_str(), fp));
    }

    create_dir(&args.out)?;
    let mut summary = String::new();
    for (key, fp) in &outputs {
        let (name, bytes) = match args.format {
            FingerprintFormat::Binary => (format!("{key}.svmf"), fp.encode()),
            FingerprintFormat::Json => (format!("{key}.svmf.json"), format!("{}\n", fp.to_json()).into_bytes()),
        };
        write_file(&args.out.join(&name), &bytes)?;
        summary.push_str(&format!("{key}\tnnz={}\t{name}\n", fp.nnz()));
    }
    summary.push_str(&format!("fingerprinted {} set(s) into {}\n", outputs.len(), args.out.display()));
    Ok(summary)
}

/// Fingerprint files in `dir` sorted by file name, keyed by the name without
/// its `.svmf` or `.svmf.json` suffix.
fn fingerprint_dir(dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let key = name.strip_suffix(".svmf.json").or_else(|| name.strip_suffix(".svmf"));
        if let Some(key) = key {
            files.push((key.to_string(), path.clone()));
        }
    }
    files.sort();
    Ok(files)
}

pub fn index(args: &IndexArgs) -> CliResult<String> {
    let mut index = FingerprintIndex::new();
    if args.input.is_dir() {
        if args.model.overrides_hyperparams() || args.model.catalog.is_some() {
            return Err(CliError::Usage(
                "catalog and hyperparameter flags only apply to detection input".into(),
            ));
        }
        for (key, path) in fingerprint_dir(&args.input)? {
            let fp = load_fingerprint(&path)?;
            index.add(key, fp).map_err(|e| CliError::from(e).context(path.display()))?;
        }
    } else {
        let catalog = args.model.catalog()?;
        let hp = args.model.hyperparams(Hyperparams::default())?;
        index = FingerprintIndex::with_dimension(catalog.n());
        for (line, set) in load_detections(&args.input)? {
            let fp = fingerprint_set(line, &set, &catalog, &hp, args.model.score_threshold)
                .map_err(|e| e.context(args.input.display()))?;
            index
                .add(set.image_key.clone(), fp)
                .map_err(|e| CliError::from(e).context(format!("{}: line {line}", args.input.display())))?;
        }
    }
    write_file(&args.out, &index.encode())?;
    Ok(format!("indexed {} fingerprint(s) into {}\n", index.len(), args.out.display()))
}

pub fn search(args: &SearchArgs) -> CliResult<String> {
    let index = load_index(&args.index)?;
    let query = load_fingerprint(&args.query)?;
    let hits = index.search(&query, args.k)?;
    let mut out = String::from("rank\tkey\tscore\n");
    for hit in hits {
        out.push_str(&format!("{}\t{}\t{}\n", hit.rank, hit.key, hit.score));
    }
    Ok(out)
}

pub fn rank(args: &RankArgs) -> CliResult<String> {
    let index = load_index(&args.index)?;
    let query = load_fingerprint(&args.query)?;
    Ok(format!("{}\n", index.rank_of(&query, &args.target)?))
}

fn emit_report<T: Serialize>(report: &T, args: &ReportArgs, table: Table) -> CliResult<String> {
    let json = format!("{}\n", serde_json::to_string_pretty(report)?);
    if let Some(path) = &args.out {
        write_file(path, json.as_bytes())?;
    }
    Ok(if args.json { json } else { table.render() })
}

pub fn eval_detect(args: &EvalDetectArgs) -> CliResult<String> {
    let records = parse_eval_records(open(&args.input)?).map_err(|e| CliError::from(e).context(args.input.display()))?;
    let report = aggregate_detection_report(&records)
        .map_err(|e| CliError::from(e).context(args.input.display()))?
        .rounded();
    let mut table = Table::new(["metric", "value"]);
    table.row([format!("S-F1 ({})", report.averaging), format!("{:.1}", report.s_f1)]);
    table.row(["M-EM".to_string(), format!("{:.1}", report.m_em)]);
    table.row(["records".to_string(), report.records.to_string()]);
    emit_report(&report, &args.report, table)
}

#[derive(Debug, Serialize)]
struct RetrievalReport {
    queries: usize,
    levels: Vec<LevelResult>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryLine {
    target_key: String,
    query_fp: SvmfJson,
}

fn read_queries(path: &Path) -> CliResult<Vec<(Svmf, String)>> {
    let mut queries = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let at = |e: CliError| e.context(format!("{}: line {}", path.display(), idx + 1));
        let line = line.map_err(|e| at(CliError::data(e.to_string())))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryLine = serde_json::from_str(&line).map_err(|e| at(CliError::data(e.to_string())))?;
        let fp = Svmf::from_json_form(&q.query_fp).map_err(|e| at(e.into()))?;
        queries.push((fp, q.target_key));
    }
    if queries.is_empty() {
        return Err(CliError::data(format!("{}: no queries", path.display())));
    }
    Ok(queries)
}

pub fn eval_retrieval(args: &EvalRetrievalArgs) -> CliResult<String> {
    let report = match (&args.bundle, &args.index, &args.queries) {
        (Some(dir), None, None) => {
            let bench = Benchmark::read_from(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
            let catalog = args.model.catalog()?;
            if catalog.n() != bench.manifest.catalog_size {
                return Err(CliError::data(format!(
                    "bundle was generated for a catalog of {} classes, catalog has {}",
                    bench.manifest.catalog_size,
                    catalog.n()
                )));
            }
            if bench.queries.is_empty() {
                return Err(CliError::data(format!("{}: bundle has no queries", dir.display())));
            }
            let hp = args.model.hyperparams(bench.manifest.hyperparams.clone())?;
            RetrievalReport {
                queries: bench.queries.len(),
                levels: bench.evaluate(&catalog, &hp, args.model.score_threshold)?,
            }
        }
        (None, Some(index_path), Some(query_path)) => {
            let index = load_index(index_path)?;
            let queries = read_queries(query_path)?;
            let ranks = queries
                .iter()
                .map(|(q, t)| index.rank_of(q, t))
                .collect::<Result<Vec<_>, _>>()?;
            let name = index_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "index".into());
            RetrievalReport {
                queries: queries.len(),
                levels: vec![LevelResult {
                    name,
                    index_size: index.len(),
                    average_rank: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
                    ranks,
                }],
            }
        }
        _ => return Err(CliError::Usage("pass either --bundle or both --index and --queries".into())),
    };
    let mut table = Table::new(["level", "index_size", "queries", "average_rank"]);
    for level in &report.levels {
        table.row([
            level.name.clone(),
            level.index_size.to_string(),
            level.ranks.len().to_string(),
            format!("{:.2}", level.average_rank),
        ]);
    }
    emit_report(&report, &args.report, table)
}

pub fn gen(args: &GenArgs) -> CliResult<String> {
    let catalog = args.model.catalog()?;
    let hp = args.model.hyperparams(Hyperparams::default())?;
    let defaults = SynthSpec::with_pool(&catalog, args.pool_fg, args.pool_cb);
    let spec = SynthSpec {
        min_instances: args.min_instances.unwrap_or(defaults.min_instances),
        max_instances: args.max_instances.unwrap_or(defaults.max_instances),
        canvas_width: args.canvas_width.unwrap_or(defaults.canvas_width),
        canvas_height: args.canvas_height.unwrap_or(defaults.canvas_height),
        mean_box_size: args.box_size.unwrap_or(defaults.mean_box_size),
        ..defaults
    };
    let levels = if args.identity {
        vec![PerturbationParams::identity()]
    } else if args.levels.is_empty() {
        PerturbationParams::reference_levels().to_vec()
    } else {
        args.levels.clone()
    };
    let config = BenchmarkConfig {
        spec,
        base_count: args.bases,
        variants_per_base: args.variants,
        levels,
        seed: args.seed,
    };
    let bench = build_benchmark(&config, &catalog, &hp)?;
    create_dir(&args.out)?;
    bench.write_to(&args.out).map_err(|e| CliError::from(e).context(args.out.display()))?;
    Ok(format!(
        "wrote {} queries and {} level(s) of {} sets into {}\n",
        bench.queries.len(),
        bench.levels.len(),
        config.base_count * config.variants_per_base,
        args.out.display()
    ))
}
