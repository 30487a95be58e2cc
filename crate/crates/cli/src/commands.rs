use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ampgen_core::conditioning::{self, cond_of, pc_sampler, sc_sampler, ConditioningVector};
use ampgen_core::data;
use ampgen_core::diffusion::{
    checkpoint_from_json, checkpoint_json, cosine_schedule, sample, train_denoiser,
    write_audit_csv, AUDIT_HEADER,
};
use ampgen_core::embedding::{CodecSpace, DEFAULT_PAD_MARGIN};
use ampgen_core::evaluation::{
    auprc, confusion_at_threshold, precision_at_k, robustness_report, score_sequences,
    write_scores_csv, EvalReport, ScoredExample,
};
use ampgen_core::fasta::{parse_fasta, parse_fasta_str, write_fasta, FastaRecord};
use ampgen_core::features::{self, feature_names, featurize_batch, featurize_with};
use ampgen_core::gbdt::{feature_importance, model_from_json, model_to_json, train};
use ampgen_core::metrics::{self, FitnessTable};
use ampgen_core::seq::Residue;
use ampgen_core::synthetic::{generate, NegativeMode, NegativeSpec};
use ampgen_core::{
    CadsConfig, Codec, EmbeddingMatrix, LabeledExample, PeptideSequence, Provenance, ScaleTable,
    ToyDenoiser,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::output::Outputs;

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(cli: Cli) -> CliResult {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            pool.install(|| run(cli.command, config))
        }
        None => run(cli.command, config),
    }
}

fn run(command: Command, mut config: PipelineConfig) -> CliResult {
    let mut out = Outputs::default();
    match command {
        Command::Encode(a) => encode(&a, &mut out)?,
        Command::Decode(a) => decode(&a, &mut out)?,
        Command::Cond(a) => cond(&a, &mut config, &mut out)?,
        Command::Negatives(a) => negatives(&a, &config, &mut out)?,
        Command::Featurize(a) => {
            apply(&mut config.features.ema_alpha, a.ema_alpha);
            featurize(&a, &config, &mut out)?
        }
        Command::TrainClf(a) => train_clf(&a, &mut config, &mut out)?,
        Command::Predict(a) => {
            apply(&mut config.features.ema_alpha, a.ema_alpha);
            predict(&a, &config, &mut out)?
        }
        Command::EvalClf(a) => eval_clf(&a, &mut config, &mut out)?,
        Command::TrainDenoiser(a) => train_den(&a, &mut config, &mut out)?,
        Command::Sample(a) => sample_cmd(&a, &mut config, &mut out)?,
        Command::Metrics(a) => metrics_cmd(&a, &config, &mut out)?,
    }
    out.commit()
}

fn apply<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn read_records(path: &Path) -> CliResult<Vec<FastaRecord>> {
    let file = parse_fasta(path)?;
    for w in &file.warnings {
        eprintln!("warning: {w}");
    }
    Ok(file.records)
}

fn records_or_bundled(path: Option<&Path>) -> CliResult<Vec<FastaRecord>> {
    match path {
        Some(p) => read_records(p),
        None => {
            Ok(parse_fasta_str(data::AMP_OPEN_500_FASTA, Path::new("amp_open_500.fasta"))?.records)
        }
    }
}

fn sequences(records: &[FastaRecord]) -> Vec<PeptideSequence> {
    records.iter().map(|r| r.sequence.clone()).collect()
}

/// `key=path` pairs from repeated flags.
fn split_pair(spec: &str) -> CliResult<(&str, &Path)> {
    spec.split_once('=')
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .map(|(k, v)| (k, Path::new(v)))
        .ok_or_else(|| CliError::Usage(format!("expected name=path, got '{spec}'")))
}

fn codec() -> CliResult<Codec> {
    Ok(Codec::new(
        ScaleTable::load()?,
        CodecSpace::Standardized,
        DEFAULT_PAD_MARGIN,
    )?)
}

fn json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn fasta_bytes(records: &[FastaRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_fasta(records, &mut buf).expect("writing to memory");
    buf
}

#[derive(Serialize)]
struct Report<'a, T> {
    command: &'static str,
    config: &'a PipelineConfig,
    result: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingSet {
    ids: Vec<String>,
    /// Row-major scale x position matrices.
    embeddings: Vec<Vec<f64>>,
}

fn encode(a: &EncodeArgs, out: &mut Outputs) -> CliResult {
    let codec = codec()?;
    let records = read_records(&a.input)?;
    let embeddings = records
        .iter()
        .map(|r| Ok(codec.encode(&r.sequence)?.into_vec()))
        .collect::<CliResult<Vec<_>>>()?;
    let ids = records.into_iter().map(|r| r.id).collect();
    out.add(&a.output, json(&EmbeddingSet { ids, embeddings })?);
    Ok(())
}

fn decode(a: &DecodeArgs, out: &mut Outputs) -> CliResult {
    let codec = codec()?;
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", a.input.display())))?;
    let set: EmbeddingSet = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.input.display())))?;
    if set.ids.len() != set.embeddings.len() {
        return Err(CliError::Runtime(
            "ids and embeddings differ in count".into(),
        ));
    }
    let records = set
        .ids
        .into_iter()
        .zip(set.embeddings)
        .map(|(id, e)| {
            let sequence = EmbeddingMatrix::from_vec(e)
                .and_then(|m| codec.decode(&m))
                .map_err(|e| CliError::Runtime(format!("{id}: {e}")))?;
            Ok(FastaRecord { id, sequence })
        })
        .collect::<CliResult<Vec<_>>>()?;
    out.add(&a.output, fasta_bytes(&records));
    Ok(())
}

fn cond(a: &CondArgs, config: &mut PipelineConfig, out: &mut Outputs) -> CliResult {
    let seed = || {
        a.seed
            .ok_or_else(|| CliError::Usage("--seed is required for the pc and sc modes".into()))
    };
    let vectors = match a.mode {
        CondMode::Pc => {
            let ranges = &mut config.ranges;
            if a.length.is_some() || a.charge.is_some() || a.hydrophobicity.is_some() {
                ranges.length = a.length;
                ranges.charge = a.charge;
                ranges.hydrophobicity = a.hydrophobicity;
            }
            pc_sampler(ranges, a.n, &mut ChaCha8Rng::seed_from_u64(seed()?))?
        }
        CondMode::Sc => {
            let refs = sequences(&records_or_bundled(a.input.as_deref())?);
            sc_sampler(&refs, a.n, &mut ChaCha8Rng::seed_from_u64(seed()?))?
        }
        CondMode::Exact => records_or_bundled(a.input.as_deref())?
            .iter()
            .map(|r| cond_of(&r.sequence, !a.non_amp))
            .collect(),
    };
    let mut buf = Vec::new();
    conditioning::write_csv(&vectors, &mut buf).expect("writing to memory");
    out.add(&a.output, buf);
    Ok(())
}

fn negatives(a: &NegativesArgs, config: &PipelineConfig, out: &mut Outputs) -> CliResult {
    let mode: NegativeMode = a
        .mode
        .parse()
        .map_err(|e: ampgen_core::Error| CliError::Usage(e.to_string()))?;
    let count = match a.count {
        Some(n) => n,
        None => config.negatives.count()?,
    };
    let sources = sequences(&records_or_bundled(a.input.as_deref())?);
    let records: Vec<FastaRecord> = generate(
        &NegativeSpec {
            mode,
            count,
            seed: a.seed,
        },
        &sources,
    )?
    .into_iter()
    .map(|r| FastaRecord {
        id: r.id,
        sequence: r.sequence,
    })
    .collect();
    out.add(&a.output, fasta_bytes(&records));
    Ok(())
}

fn featurize(a: &FeaturizeArgs, config: &PipelineConfig, out: &mut Outputs) -> CliResult {
    let records = read_records(&a.input)?;
    let rows = featurize_batch(&sequences(&records), config.features.ema_alpha)?;
    let ids: Vec<String> = records.into_iter().map(|r| r.id).collect();
    let mut buf = Vec::new();
    features::write_csv(&ids, &rows, &mut buf).expect("writing to memory");
    out.add(&a.output, buf);
    Ok(())
}

fn labeled(
    records: &[FastaRecord],
    label: bool,
    prov: Provenance,
    alpha: f64,
) -> CliResult<Vec<LabeledExample>> {
    records
        .iter()
        .map(|r| {
            Ok(LabeledExample::new(
                featurize_with(&r.sequence, alpha)?,
                label,
                prov,
            )?)
        })
        .collect()
}

#[derive(Serialize)]
struct TrainSummary {
    examples: BTreeMap<String, usize>,
    rounds_run: usize,
    best_round: usize,
    final_train_logloss: Option<f64>,
    top_features: Vec<(String, f64)>,
}

fn train_clf(a: &TrainClfArgs, config: &mut PipelineConfig, out: &mut Outputs) -> CliResult {
    let train_cfg = &mut config.train;
    train_cfg.seed = a.seed;
    apply(&mut train_cfg.max_estimators, a.max_estimators);
    apply(&mut train_cfg.max_depth, a.max_depth);
    apply(&mut train_cfg.learning_rate, a.learning_rate);
    apply(&mut config.features.ema_alpha, a.ema_alpha);
    let alpha = config.features.ema_alpha;

    let mut counts = BTreeMap::new();
    let positives = records_or_bundled(a.positives.as_deref())?;
    counts.insert(Provenance::EV.to_string(), positives.len());
    let mut dataset = labeled(&positives, true, Provenance::EV, alpha)?;
    for spec in &a.negatives {
        let (name, path) = split_pair(spec)?;
        let prov: Provenance = name
            .parse()
            .map_err(|e: ampgen_core::Error| CliError::Usage(e.to_string()))?;
        if prov.is_ev() {
            return Err(CliError::Usage(
                "negatives cannot have provenance 'ev'".into(),
            ));
        }
        let records = read_records(path)?;
        *counts.entry(prov.to_string()).or_insert(0) += records.len();
        dataset.extend(labeled(&records, false, prov, alpha)?);
    }

    let (model, log) = train(&dataset, &config.train)?;
    out.add(&a.output, model_to_json(&model)?.into_bytes());
    if let Some(path) = &a.log {
        let mut buf = Vec::new();
        log.write_csv(&mut buf).expect("writing to memory");
        out.add(path, buf);
    }
    if let Some(path) = &a.report {
        let imp = feature_importance(&model);
        let mut order: Vec<usize> = (0..imp.gain_share.len()).collect();
        order.sort_by(|&i, &j| {
            imp.gain_share[j]
                .total_cmp(&imp.gain_share[i])
                .then(i.cmp(&j))
        });
        let names = feature_names();
        let summary = TrainSummary {
            examples: counts,
            rounds_run: log.rounds.len(),
            best_round: log.best_round,
            final_train_logloss: log
                .rounds
                .get(log.best_round.wrapping_sub(1))
                .map(|r| r.train_logloss),
            top_features: order
                .into_iter()
                .take(10)
                .filter(|&i| imp.gain_share[i] > 0.0)
                .map(|i| {
                    (
                        names.get(i).cloned().unwrap_or_else(|| i.to_string()),
                        imp.gain_share[i],
                    )
                })
                .collect(),
        };
        out.add(
            path,
            json(&Report {
                command: "train-clf",
                config,
                result: summary,
            })?,
        );
    }
    Ok(())
}

fn load_model(path: &Path) -> CliResult<ampgen_core::GbdtModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    model_from_json(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn predict(a: &PredictArgs, config: &PipelineConfig, out: &mut Outputs) -> CliResult {
    let model = load_model(&a.model)?;
    let records = read_records(&a.input)?;
    let scores = score_sequences(&model, &sequences(&records), config.features.ema_alpha)?;
    let mut buf = String::from("id,score\n");
    for (r, s) in records.iter().zip(scores) {
        buf.push_str(&format!("{},{s:?}\n", r.id));
    }
    out.add(&a.output, buf.into_bytes());
    Ok(())
}

fn eval_clf(a: &EvalClfArgs, config: &mut PipelineConfig, out: &mut Outputs) -> CliResult {
    apply(&mut config.eval.threshold, a.threshold);
    apply(&mut config.eval.top_k, a.top_k);
    apply(&mut config.features.ema_alpha, a.ema_alpha);
    let alpha = config.features.ema_alpha;
    let model = load_model(&a.model)?;

    let mut scored = Vec::new();
    let mut add = |records: Vec<FastaRecord>, label: bool, source: &str| -> CliResult {
        let scores = score_sequences(&model, &sequences(&records), alpha)?;
        scored.extend(
            records
                .into_iter()
                .zip(scores)
                .map(|(r, score)| ScoredExample {
                    id: r.id,
                    score,
                    label,
                    source: source.to_owned(),
                }),
        );
        Ok(())
    };
    add(read_records(&a.positives)?, true, "positive")?;
    for spec in &a.negatives {
        let (name, path) = split_pair(spec)?;
        add(read_records(path)?, false, name)?;
    }
    let mut sources = BTreeMap::new();
    for spec in &a.robustness {
        let (name, path) = split_pair(spec)?;
        sources.insert(name.to_owned(), sequences(&read_records(path)?));
    }

    let confusion = confusion_at_threshold(&scored, config.eval.threshold)?;
    let prec = precision_at_k(&scored, config.eval.top_k)?;
    if prec.capped {
        eprintln!(
            "warning: top-k {} exceeds the {} scored examples",
            config.eval.top_k,
            scored.len()
        );
    }
    let robustness = if sources.is_empty() {
        BTreeMap::new()
    } else {
        robustness_report(&model, &sources, config.eval.threshold, alpha)?.rates
    };
    let report = EvalReport {
        auprc: auprc(&scored)?,
        prec_at_100: prec.precision,
        tpr: confusion.tpr,
        fpr: confusion.fpr,
        lr_plus: confusion.lr_plus,
        robustness,
    };
    out.add(
        &a.output,
        json(&Report {
            command: "eval-clf",
            config,
            result: report,
        })?,
    );
    if let Some(path) = &a.scores {
        let mut buf = Vec::new();
        write_scores_csv(&scored, &mut buf).expect("writing to memory");
        out.add(path, buf);
    }
    Ok(())
}

fn train_den(a: &TrainDenoiserArgs, config: &mut PipelineConfig, out: &mut Outputs) -> CliResult {
    apply(&mut config.denoiser.hidden, a.hidden);
    apply(&mut config.denoiser.steps, a.steps);
    apply(&mut config.denoiser_train.iterations, a.iterations);
    apply(&mut config.denoiser_train.batch_size, a.batch_size);
    apply(&mut config.denoiser_train.learning_rate, a.learning_rate);
    let codec = codec()?;
    let records = records_or_bundled(a.input.as_deref())?;
    let data = records
        .iter()
        .map(|r| Ok((codec.encode(&r.sequence)?, cond_of(&r.sequence, true))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut den = ToyDenoiser::new(config.denoiser, &mut rng)?;
    let losses = train_denoiser(&mut den, &data, &config.denoiser_train, &mut rng)?;
    out.add(&a.output, checkpoint_json(&den)?.into_bytes());
    if let Some(path) = &a.losses {
        let mut buf = String::from("iteration,loss\n");
        for (i, l) in losses.iter().enumerate() {
            buf.push_str(&format!("{},{l:?}\n", i + 1));
        }
        out.add(path, buf.into_bytes());
    }
    Ok(())
}

fn sample_cmd(a: &SampleArgs, config: &mut PipelineConfig, out: &mut Outputs) -> CliResult {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if a.no_cads {
        config.cads = CadsConfig::disabled();
    }
    let text = std::fs::read_to_string(&a.checkpoint)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", a.checkpoint.display())))?;
    let den = checkpoint_from_json(&text)?;
    let sched = cosine_schedule(den.config().steps)?;
    let conds = match &a.conditions {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
            conditioning::read_csv(std::io::BufReader::new(file))?
        }
        None => vec![ConditioningVector {
            amp: !a.non_amp,
            length: a.length,
            charge: a.charge,
            hydrophobicity: a.hydrophobicity,
        }],
    };
    let codec = codec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut records = Vec::new();
    let mut audit = format!("{AUDIT_HEADER}\n").into_bytes();
    let mut embeddings = EmbeddingSet {
        ids: Vec::new(),
        embeddings: Vec::new(),
    };
    for (ci, c) in conds.iter().enumerate() {
        let mats = sample(&den, c, &sched, &config.cads, a.n, &mut rng)?;
        let mut rows = Vec::new();
        for (k, m) in mats.into_iter().enumerate() {
            let id = format!("gen|seed={}|c={ci}|i={k}", a.seed);
            let decoded = codec.decode(&m).ok();
            if let Some(s) = &decoded {
                records.push(FastaRecord {
                    id: id.clone(),
                    sequence: s.clone(),
                });
            }
            rows.push((id.clone(), decoded));
            embeddings.ids.push(id);
            embeddings.embeddings.push(m.into_vec());
        }
        let mut buf = Vec::new();
        write_audit_csv(c, &rows, &mut buf).expect("writing to memory");
        let body = buf.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1);
        audit.extend_from_slice(&buf[body..]);
    }
    eprintln!("decoded {} of {} samples", records.len(), conds.len() * a.n);
    out.add(&a.output, fasta_bytes(&records));
    if let Some(path) = &a.audit {
        out.add(path, audit);
    }
    if let Some(path) = &a.embeddings {
        out.add(path, json(&embeddings)?);
    }
    Ok(())
}

fn read_log_probs(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

fn metrics_cmd(a: &MetricsArgs, config: &PipelineConfig, out: &mut Outputs) -> CliResult {
    let set = sequences(&read_records(&a.input)?);
    let reference: Option<HashSet<PeptideSequence>> = match &a.reference {
        Some(p) => Some(sequences(&read_records(p)?).into_iter().collect()),
        None => None,
    };
    let mut report = metrics::report(&set, reference.as_ref(), &FitnessTable::load()?)?;
    if let Some(path) = &a.log_probs {
        report.pseudo_perplexity = Some(metrics::pseudo_perplexity(&read_log_probs(path)?)?);
    }
    if let Some(path) = &a.frequencies {
        let mut buf = String::from("residue,frequency\n");
        for (r, f) in Residue::ALL.iter().zip(report.aa_frequencies) {
            buf.push_str(&format!("{r},{f:?}\n"));
        }
        out.add(path, buf.into_bytes());
    }
    out.add(
        &a.output,
        json(&Report {
            command: "metrics",
            config,
            result: report,
        })?,
    );
    Ok(())
}
