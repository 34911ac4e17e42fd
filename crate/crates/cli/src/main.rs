mod cli;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;
use sotkit::analysis::knn_probe;
use sotkit::der::{der, DerBreakdown};
use sotkit::formats::{self, FormatError, TimedWord};
use sotkit::frames::{attribute_words, postprocess_segments, rasterize_labels};
use sotkit::grammar::{parse_token_stream, serialize_transcript, validate_structure};
use sotkit::loss::{frame_ce, serialized_ce, total_loss, FrameLogProbs, TokenLogProbs};
use sotkit::model::{TimeInterval, Word};
use sotkit::mtwer::{count_errors, ratio_to_f64, score, RoleErrorCounts};
use sotkit::sessions::{agreement, clean_words, merge_words_to_utterances, speech_measures, window_segments, Segment};
use sotkit::sim::{run_error_study, ConditionRates, SimConfig};

use cli::{Cli, Command, FramesArgs, SegmentArgs, SimulateArgs};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T, FormatError>) -> Result<T> {
    let text = read(path)?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

fn percent(x: f64, raw: bool) -> String {
    if raw {
        format!("{x}")
    } else {
        format!("{:.1}", 100.0 * x)
    }
}

fn paired(refs: &[PathBuf], hyps: &[PathBuf]) -> Result<Vec<(PathBuf, PathBuf)>> {
    if refs.len() != hyps.len() {
        bail!("{} reference files but {} hypothesis files", refs.len(), hyps.len());
    }
    Ok(refs.iter().cloned().zip(hyps.iter().cloned()).collect())
}

fn score_asr(refs: &[PathBuf], hyps: &[PathBuf], raw: bool) -> Result<String> {
    let per_file: Vec<RoleErrorCounts> = paired(refs, hyps)?
        .par_iter()
        .map(|(r, h)| {
            let r = load(r, formats::read_transcript_jsonl)?;
            let h = load(h, formats::read_transcript_jsonl)?;
            Ok(count_errors(&r.words(), &h.words()))
        })
        .collect::<Result<_>>()?;
    let mut total = RoleErrorCounts::default();
    for c in per_file {
        total += c;
    }
    let report = score(&total)?;
    let mut out = String::from("role,mtWER,WER,AER,NREF\n");
    let mut nref = 0;
    for s in report.roles.iter().flatten() {
        nref += s.nref;
    }
    for role in sotkit::model::SpeakerRole::ALL {
        if let Some(s) = report.role(role) {
            let [m, w, a] = [s.mtwer, s.wer, s.aer].map(|r| percent(ratio_to_f64(r), raw));
            writeln!(out, "{role},{m},{w},{a},{}", s.nref)?;
        }
    }
    let [m, w, a] = [report.macro_mtwer, report.macro_wer, report.macro_aer].map(|r| percent(ratio_to_f64(r), raw));
    writeln!(out, "macro,{m},{w},{a},{nref}")?;
    Ok(out)
}

fn score_der(refs: &[PathBuf], hyps: &[PathBuf], collar: f64, raw: bool) -> Result<String> {
    let per_file: Vec<DerBreakdown> = paired(refs, hyps)?
        .par_iter()
        .map(|(r, h)| {
            let r = load(r, formats::read_rttm)?;
            let h = load(h, formats::read_rttm)?;
            Ok(der(&r, &h, collar)?)
        })
        .collect::<Result<_>>()?;
    let mut sum = DerBreakdown::default();
    for d in &per_file {
        sum.missed += d.missed;
        sum.false_alarm += d.false_alarm;
        sum.confusion += d.confusion;
        sum.total += d.total;
    }
    let rate = (sum.missed + sum.false_alarm + sum.confusion) / sum.total;
    let mut out = String::from("MD,FA,SC,TOTAL,DER\n");
    writeln!(
        out,
        "{:.3},{:.3},{:.3},{:.3},{}",
        sum.missed,
        sum.false_alarm,
        sum.confusion,
        sum.total,
        percent(rate, raw)
    )?;
    Ok(out)
}

fn segment(a: &SegmentArgs) -> Result<String> {
    let transcript = match (&a.words, &a.transcript) {
        (Some(path), _) => {
            let timed = load(path, formats::read_words_jsonl)?;
            let mut words = timed
                .into_iter()
                .enumerate()
                .map(|(i, w)| {
                    let role = w.role.with_context(|| format!("word {} ({}) has no speaker", i + 1, w.text))?;
                    Ok(Word::new(w.text, w.span, role)?)
                })
                .collect::<Result<Vec<_>>>()?;
            words.sort_by(|x, y| x.span.start().total_cmp(&y.span.start()).then(x.role.cmp(&y.role)));
            merge_words_to_utterances(&clean_words(&words, a.max_word), a.gap)
        }
        (None, Some(path)) => load(path, formats::read_transcript_jsonl)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let w = window_segments(&transcript, a.window);
    if !w.oversized.is_empty() {
        eprintln!("skipped {} utterance(s) longer than {} s", w.oversized.len(), a.window);
    }
    Ok(formats::write_segments_jsonl(&w.segments))
}

fn frames(a: &FramesArgs) -> Result<String> {
    if let Some(path) = &a.transcript {
        let t = load(path, formats::read_transcript_jsonl)?;
        if !(a.period.is_finite() && a.period > 0.0) {
            bail!("frame period must be positive");
        }
        let end = a.end.unwrap_or(t.session_span().end());
        let span = TimeInterval::new(0.0, end)?;
        return Ok(formats::write_label_csv(&rasterize_labels(&t, a.period, span)));
    }
    let path = a.probs.as_ref().expect("clap requires one input");
    let f = load(path, formats::read_frame_csv)?;
    let segs = postprocess_segments(&f.argmax_labels().to_segments(), a.merge_gap, a.min_dur);
    Ok(formats::write_rttm(&a.uri, &segs))
}

fn speech_metrics(inputs: &[String], role: sotkit::model::SpeakerRole, window: f64) -> Result<String> {
    let mut by_child: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for spec in inputs {
        let Some((id, path)) = spec.split_once('=') else { bail!("--input expects CHILD_ID=PATH, got {spec:?}") };
        if id.is_empty() || id.contains(',') {
            bail!("bad child id {id:?}");
        }
        by_child.entry(id.to_string()).or_default().push(PathBuf::from(path));
    }
    let jobs: Vec<(String, Vec<PathBuf>)> = by_child.into_iter().collect();
    let results: Vec<(String, sotkit::sessions::MeasureSet)> = jobs
        .par_iter()
        .map(|(id, paths)| {
            let mut segs: Vec<Segment> = Vec::new();
            for p in paths {
                let t = load(p, formats::read_transcript_jsonl)?;
                segs.extend(window_segments(&t, window).segments);
            }
            let m = speech_measures(&segs, role).with_context(|| format!("child {id}"))?;
            Ok((id.clone(), m))
        })
        .collect::<Result<_>>()?;
    Ok(formats::write_measures_csv(&results.into_iter().collect()))
}

fn simulate(a: &SimulateArgs, seed: u64, raw: bool) -> Result<String> {
    let c = SimConfig {
        seed,
        n_utterances: a.n_utterances,
        p_drop_speaker: a.p_drop_speaker,
        p_drop_timestamp: a.p_drop_timestamp,
        p_loop: a.p_loop,
        max_words: a.max_words,
        ..SimConfig::default()
    };
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let r = run_error_study(&c, a.trials)?;
    let cell = |x: f64| if raw { format!("{x}") } else { format!("{:.1}%", 100.0 * x) };
    let rows: [(&str, fn(&ConditionRates) -> f64); 4] = [
        ("Miss Speaker", |r| r.miss_speaker),
        ("Miss Timestamp", |r| r.miss_timestamp),
        ("Miss Both", |r| r.miss_both),
        ("Infinite Loop", |r| r.infinite_loop),
    ];
    let mut out = format!("{:<16}{:>10}{:>10}\n", "Error Type", "w/o F.D.", "w/ F.D.");
    for (name, get) in rows {
        writeln!(out, "{:<16}{:>10}{:>10}", name, cell(get(&r.without_fsm)), cell(get(&r.with_fsm)))?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct LossReport {
    l_asr: f64,
    l_diar: f64,
    lambda_diar: f64,
    total: f64,
}

fn run(cli: &Cli) -> Result<String> {
    Ok(match &cli.command {
        Command::Validate { tokens } => {
            let s = load(tokens, formats::read_token_json)?;
            let mut out = serde_json::to_string(&validate_structure(&s))?;
            out.push('\n');
            out
        }
        Command::Parse { tokens } => {
            let s = load(tokens, formats::read_token_json)?;
            formats::write_transcript_jsonl(&parse_token_stream(&s).0)
        }
        Command::Serialize { transcript } => {
            let t = load(transcript, formats::read_transcript_jsonl)?;
            let mut out = formats::write_token_json(&serialize_transcript(&t)?);
            out.push('\n');
            out
        }
        Command::ScoreAsr { reference, hyp } => score_asr(reference, hyp, cli.raw)?,
        Command::ScoreDer { reference, hyp, collar } => score_der(reference, hyp, *collar, cli.raw)?,
        Command::Segment(a) => segment(a)?,
        Command::Frames(a) => frames(a)?,
        Command::Suppress { probs, threshold, shrink } => {
            if !(shrink.is_finite() && *shrink >= 0.0) {
                bail!("shrink must be non-negative");
            }
            let f = load(probs, formats::read_frame_csv)?;
            let mut out = String::from("start,end\n");
            for r in sotkit::frames::silence_regions(&f, *threshold, *shrink).regions() {
                writeln!(out, "{:.3},{:.3}", r.start(), r.end())?;
            }
            out
        }
        Command::Attribute { words, probs } => {
            let timed: Vec<TimedWord> = load(words, formats::read_words_jsonl)?;
            let f = load(probs, formats::read_frame_csv)?;
            let pairs: Vec<(String, TimeInterval)> = timed.into_iter().map(|w| (w.text, w.span)).collect();
            formats::write_words_jsonl(&attribute_words(&pairs, &f))
        }
        Command::Loss { asr, diar, lambda_diar } => {
            let (p, t) = load(asr, formats::read_token_prob_csv)?;
            let (fp, fl) = load(diar, formats::read_labeled_frame_csv)?;
            let l_asr = serialized_ce(&TokenLogProbs::from_probs(p, t)?)?;
            let l_diar = frame_ce(&FrameLogProbs::from_probs(fp, fl)?)?;
            let r = LossReport { l_asr, l_diar, lambda_diar: *lambda_diar, total: total_loss(l_asr, l_diar, *lambda_diar) };
            let mut out = serde_json::to_string(&r)?;
            out.push('\n');
            out
        }
        Command::SpeechMetrics { inputs, role, window } => speech_metrics(inputs, *role, *window)?,
        Command::Agreement { gt, pred } => {
            let gt = load(gt, formats::read_measures_csv)?;
            let pred = load(pred, formats::read_measures_csv)?;
            formats::write_agreement_csv(&agreement(&gt, &pred)?)
        }
        Command::Knn { train, test, k } => {
            let (_, train) = load(train, formats::read_embeddings_csv)?;
            let (_, test) = load(test, formats::read_embeddings_csv)?;
            let acc = knn_probe(&train, &test, *k)?;
            format!("k,n_test,accuracy\n{k},{},{}\n", test.len(), percent(acc, cli.raw))
        }
        Command::Simulate(a) => simulate(a, cli.seed, cli.raw)?,
    })
}

#[derive(Serialize)]
struct ErrorJson {
    error: String,
    causes: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    }
    let result = run(&cli).and_then(|out| match &cli.output {
        Some(path) => std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{out}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorJson { error: e.to_string(), causes: e.chain().skip(1).map(|c| c.to_string()).collect() };
            eprintln!("{}", serde_json::to_string(&report).expect("plain record"));
            ExitCode::from(1)
        }
    }
}
