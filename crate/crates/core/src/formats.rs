//! Text formats read and written by the command-line tool.
//!
//! * transcripts: JSON lines `{"start", "end", "speaker", "text"}`
//! * words: JSON lines `{"start", "end", "word", "speaker"?}`
//! * token streams: JSON, either `{"tokens": [...], "truncated": bool}` or a
//!   bare array of `{"class": "header"|"ts"|"child"|"adult"|"text"|"eot"}`
//!   objects, with `"value"` on timestamps and `"word"` on text
//! * role segments: RTTM
//! * frame probabilities: CSV `t,p_child,p_adult,p_sil`
//! * embeddings: CSV `id,label,v0,v1,...`
//! * speech measures: CSV keyed by `child_id`
//!
//! All parsers are total: malformed input yields an error, never a panic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::LabeledVectors;
use crate::frames::{FrameLabel, FrameLabelSequence, FrameProbSequence, FrameProbs, RoleSegment, DEFAULT_FRAME_PERIOD};
use crate::grammar::{TokenClass, TokenStream, MAX_TS_INDEX};
use crate::model::{ModelError, SpeakerRole, TimeInterval, Transcript, Utterance, Word};
use crate::sessions::{Measure, MeasureAgreement, MeasureSet, Segment};
use crate::vocab::{VocabError, VocabularyMap};

const PERIOD_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

fn invalid(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Invalid { line, msg: msg.into() }
}

fn interval(line: usize, start: f64, end: f64) -> Result<TimeInterval, FormatError> {
    TimeInterval::new(start, end).map_err(|e| invalid(line, e.to_string()))
}

fn json_lines<'a, T: Deserialize<'a>>(input: &'a str) -> impl Iterator<Item = Result<(usize, T), FormatError>> + 'a {
    input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| {
        serde_json::from_str(l).map(|v| (i + 1, v)).map_err(|source| FormatError::Json { line: i + 1, source })
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct UtteranceRecord {
    start: f64,
    end: f64,
    speaker: SpeakerRole,
    text: String,
}

/// Utterances in file order. The session span is `[0, last end]`.
pub fn read_transcript_jsonl(input: &str) -> Result<Transcript, FormatError> {
    let mut utts = Vec::new();
    for rec in json_lines::<UtteranceRecord>(input) {
        let (line, r) = rec?;
        utts.push(Utterance::from_text(r.speaker, interval(line, r.start, r.end)?, &r.text));
    }
    Ok(Transcript::from_utterances(utts)?)
}

fn write_utterances(out: &mut String, utts: &[Utterance]) {
    for u in utts {
        let rec = UtteranceRecord { start: u.span.start(), end: u.span.end(), speaker: u.role, text: u.text() };
        out.push_str(&serde_json::to_string(&rec).expect("plain record"));
        out.push('\n');
    }
}

pub fn write_transcript_jsonl(t: &Transcript) -> String {
    let mut out = String::new();
    write_utterances(&mut out, t.utterances());
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct WordRecord {
    start: f64,
    end: f64,
    word: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker: Option<SpeakerRole>,
}

/// A timed word whose speaker may be unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedWord {
    pub text: String,
    pub span: TimeInterval,
    pub role: Option<SpeakerRole>,
}

pub fn read_words_jsonl(input: &str) -> Result<Vec<TimedWord>, FormatError> {
    json_lines::<WordRecord>(input)
        .map(|rec| {
            let (line, r) = rec?;
            if r.word.is_empty() || r.word.chars().any(char::is_whitespace) {
                return Err(invalid(line, format!("bad word {:?}", r.word)));
            }
            Ok(TimedWord { span: interval(line, r.start, r.end)?, text: r.word, role: r.speaker })
        })
        .collect()
}

pub fn write_words_jsonl(words: &[Word]) -> String {
    let mut out = String::new();
    for w in words {
        let rec = WordRecord { start: w.span.start(), end: w.span.end(), word: w.text().to_string(), speaker: Some(w.role) };
        out.push_str(&serde_json::to_string(&rec).expect("plain record"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase", deny_unknown_fields)]
enum TokenRecord {
    Header,
    Ts { value: u16 },
    Child,
    Adult,
    Text { word: String },
    Eot,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TokenFile {
    Stream {
        tokens: Vec<TokenRecord>,
        #[serde(default)]
        truncated: bool,
    },
    Bare(Vec<TokenRecord>),
}

#[derive(Serialize)]
struct TokenFileOut {
    tokens: Vec<TokenRecord>,
    truncated: bool,
}

pub fn read_token_json(input: &str) -> Result<TokenStream, FormatError> {
    let file: TokenFile = serde_json::from_str(input).map_err(|source| FormatError::Json { line: 1, source })?;
    let (records, truncated) = match file {
        TokenFile::Stream { tokens, truncated } => (tokens, truncated),
        TokenFile::Bare(tokens) => (tokens, false),
    };
    let tokens = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(match r {
                TokenRecord::Header => TokenClass::Header,
                TokenRecord::Ts { value } if value <= MAX_TS_INDEX => TokenClass::Timestamp(value),
                TokenRecord::Ts { value } => {
                    return Err(invalid(1, format!("token {i}: timestamp index {value} exceeds {MAX_TS_INDEX}")))
                }
                TokenRecord::Child => TokenClass::SpeakerChild,
                TokenRecord::Adult => TokenClass::SpeakerAdult,
                TokenRecord::Text { word } => TokenClass::Text(word),
                TokenRecord::Eot => TokenClass::EndOfTranscript,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(TokenStream { tokens, truncated })
}

pub fn write_token_json(s: &TokenStream) -> String {
    let tokens = s
        .tokens
        .iter()
        .map(|t| match t {
            TokenClass::Header => TokenRecord::Header,
            TokenClass::Timestamp(v) => TokenRecord::Ts { value: *v },
            TokenClass::SpeakerChild => TokenRecord::Child,
            TokenClass::SpeakerAdult => TokenRecord::Adult,
            TokenClass::Text(w) => TokenRecord::Text { word: w.clone() },
            TokenClass::EndOfTranscript => TokenRecord::Eot,
        })
        .collect();
    serde_json::to_string(&TokenFileOut { tokens, truncated: s.truncated }).expect("plain record")
}

/// `SPEAKER` lines of an RTTM file. Speaker names must be `child` or
/// `adult`; other record types and `;;` comments are ignored.
pub fn read_rttm(input: &str) -> Result<Vec<RoleSegment>, FormatError> {
    let mut out = Vec::new();
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.first() {
            None => continue,
            Some(f) if f.starts_with(";;") => continue,
            Some(&"SPEAKER") => {}
            Some(_) => continue,
        }
        if fields.len() < 8 {
            return Err(invalid(line, "SPEAKER record needs at least 8 fields"));
        }
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        let (Some(tbeg), Some(tdur)) = (num(fields[3]), num(fields[4])) else {
            return Err(invalid(line, "onset and duration must be numbers"));
        };
        if tdur < 0.0 {
            return Err(invalid(line, "negative duration"));
        }
        let role: SpeakerRole = fields[7].to_ascii_lowercase().parse().map_err(|e: ModelError| invalid(line, e.to_string()))?;
        out.push(RoleSegment::new(role, interval(line, tbeg, tbeg + tdur)?));
    }
    Ok(out)
}

pub fn write_rttm(uri: &str, segs: &[RoleSegment]) -> String {
    let mut out = String::new();
    for s in segs {
        writeln!(
            out,
            "SPEAKER {uri} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            s.span.start(),
            s.span.duration(),
            s.role
        )
        .expect("writing to a String");
    }
    out
}

fn csv_reader(input: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input.as_bytes())
}

fn csv_rows(input: &str) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>), FormatError> {
    let mut rdr = csv_reader(input);
    let header: Vec<String> =
        rdr.headers().map_err(|e| invalid(1, e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((header, rows))
}

fn expect_header(header: &[String], expected: &[&str]) -> Result<(), FormatError> {
    if header.len() < expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(invalid(1, format!("expected header starting with {}", expected.join(","))));
    }
    Ok(())
}

fn parse_f64(line: usize, s: &str) -> Result<f64, FormatError> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| invalid(line, format!("not a finite number: {s:?}")))
}

fn parse_row<const N: usize>(line: usize, fields: &[String]) -> Result<[f64; N], FormatError> {
    if fields.len() != N {
        return Err(invalid(line, format!("expected {N} fields, got {}", fields.len())));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = parse_f64(line, f)?;
    }
    Ok(out)
}

/// Frame probabilities. Times must start at 0 and advance by a constant
/// period, which becomes the frame period; a single frame uses the default.
pub fn read_frame_csv(input: &str) -> Result<FrameProbSequence, FormatError> {
    let (header, rows) = csv_rows(input)?;
    expect_header(&header, &["t", "p_child", "p_adult", "p_sil"])?;
    let mut times = Vec::with_capacity(rows.len());
    let mut probs = Vec::with_capacity(rows.len());
    for (line, fields) in &rows {
        let [t, c, a, s] = parse_row::<4>(*line, fields)?;
        times.push((*line, t));
        probs.push(FrameProbs::new(c, a, s));
    }
    let period = match times.get(1) {
        Some(&(_, t1)) => t1 - times[0].1,
        None => DEFAULT_FRAME_PERIOD,
    };
    for (n, &(line, t)) in times.iter().enumerate() {
        if (t - n as f64 * period).abs() > PERIOD_TOL * (1.0 + t.abs()) {
            return Err(invalid(line, format!("frame time {t} is off the {period} s grid starting at 0")));
        }
    }
    FrameProbSequence::new(period, probs).map_err(|e| invalid(0, e.to_string()))
}

pub fn write_frame_csv(f: &FrameProbSequence) -> String {
    let mut out = String::from("t,p_child,p_adult,p_sil\n");
    for (n, p) in f.probs().iter().enumerate() {
        writeln!(out, "{:.3},{},{},{}", f.frame_start(n), p.child, p.adult, p.silence).expect("writing to a String");
    }
    out
}

pub fn write_label_csv(l: &FrameLabelSequence) -> String {
    let mut out = String::from("t,label\n");
    for (n, label) in l.labels.iter().enumerate() {
        writeln!(out, "{:.3},{}", l.frame_start(n), label.as_str()).expect("writing to a String");
    }
    out
}

fn parse_label(line: usize, s: &str) -> Result<FrameLabel, FormatError> {
    match s.to_ascii_lowercase().as_str() {
        "child" => Ok(FrameLabel::Child),
        "adult" => Ok(FrameLabel::Adult),
        "silence" | "sil" => Ok(FrameLabel::Silence),
        _ => Err(invalid(line, format!("unknown label {s:?}"))),
    }
}

/// Token-level probabilities: `target,p0,p1,...` per step.
pub fn read_token_prob_csv(input: &str) -> Result<(Vec<Vec<f64>>, Vec<usize>), FormatError> {
    let (header, rows) = csv_rows(input)?;
    expect_header(&header, &["target"])?;
    let width = header.len() - 1;
    let mut probs = Vec::with_capacity(rows.len());
    let mut targets = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != width + 1 {
            return Err(invalid(line, format!("expected {} fields", width + 1)));
        }
        targets.push(fields[0].parse::<usize>().map_err(|_| invalid(line, "target must be an index"))?);
        probs.push(fields[1..].iter().map(|f| parse_f64(line, f)).collect::<Result<_, _>>()?);
    }
    Ok((probs, targets))
}

/// Frame-level probabilities with labels: `label,p_child,p_adult,p_sil`.
pub fn read_labeled_frame_csv(input: &str) -> Result<(Vec<[f64; 3]>, Vec<FrameLabel>), FormatError> {
    let (header, rows) = csv_rows(input)?;
    expect_header(&header, &["label", "p_child", "p_adult", "p_sil"])?;
    let mut probs = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let Some((label, rest)) = fields.split_first() else { continue };
        labels.push(parse_label(line, label)?);
        probs.push(parse_row::<3>(line, rest)?);
    }
    Ok((probs, labels))
}

/// Embeddings with role labels; returns the ids alongside the vectors.
pub fn read_embeddings_csv(input: &str) -> Result<(Vec<String>, LabeledVectors), FormatError> {
    let (header, rows) = csv_rows(input)?;
    expect_header(&header, &["id", "label"])?;
    let dim = header.len() - 2;
    if dim == 0 {
        return Err(invalid(1, "no vector columns"));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut vectors = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != dim + 2 {
            return Err(invalid(line, format!("expected {} fields", dim + 2)));
        }
        ids.push(fields[0].clone());
        labels.push(fields[1].to_ascii_lowercase().parse().map_err(|e: ModelError| invalid(line, e.to_string()))?);
        vectors.push(fields[2..].iter().map(|f| parse_f64(line, f)).collect::<Result<_, _>>()?);
    }
    let lv = LabeledVectors::new(vectors, labels).map_err(|e| invalid(0, e.to_string()))?;
    Ok((ids, lv))
}

fn measures_header() -> Vec<&'static str> {
    std::iter::once("child_id").chain(Measure::ALL.iter().map(|m| m.column())).collect()
}

pub fn read_measures_csv(input: &str) -> Result<BTreeMap<String, MeasureSet>, FormatError> {
    let (header, rows) = csv_rows(input)?;
    expect_header(&header, &measures_header())?;
    let mut out = BTreeMap::new();
    for (line, fields) in rows {
        let Some((id, rest)) = fields.split_first() else { continue };
        let values = parse_row::<5>(line, rest)?;
        if out.insert(id.clone(), MeasureSet::from_values(values)).is_some() {
            return Err(invalid(line, format!("duplicate child_id {id:?}")));
        }
    }
    Ok(out)
}

pub fn write_measures_csv(m: &BTreeMap<String, MeasureSet>) -> String {
    let mut out = measures_header().join(",");
    out.push('\n');
    for (id, set) in m {
        out.push_str(id);
        for meas in Measure::ALL {
            write!(out, ",{:.4}", set.get(meas)).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

/// Correlation with three decimals and no leading zero, as in `.975`.
pub fn format_pcc(r: Option<f64>) -> String {
    match r {
        None => "NA".to_string(),
        Some(r) => {
            let s = format!("{r:.3}");
            s.replacen("0.", ".", 1)
        }
    }
}

pub fn write_agreement_csv(rows: &[MeasureAgreement]) -> String {
    let mut out = String::from("category,measure,gt_mean,pred_mean,pcc\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.2},{:.2},{}",
            r.measure.category(),
            r.measure.label(),
            r.gt_mean,
            r.pred_mean,
            format_pcc(r.pcc)
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Serialize)]
struct SegmentRecord<'a> {
    start: f64,
    end: f64,
    utterances: Vec<SegmentUtterance<'a>>,
}

#[derive(Serialize)]
struct SegmentUtterance<'a> {
    start: f64,
    end: f64,
    speaker: SpeakerRole,
    text: &'a str,
}

/// One JSON line per segment; utterance times are relative to the segment.
pub fn write_segments_jsonl(segs: &[Segment]) -> String {
    let mut out = String::new();
    for s in segs {
        let texts: Vec<String> = s.transcript.utterances().iter().map(Utterance::text).collect();
        let rec = SegmentRecord {
            start: s.span.start(),
            end: s.span.end(),
            utterances: s
                .transcript
                .utterances()
                .iter()
                .zip(&texts)
                .map(|(u, text)| SegmentUtterance { start: u.span.start(), end: u.span.end(), speaker: u.role, text })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain record"));
        out.push('\n');
    }
    out
}

pub fn read_vocab_json(input: &str) -> Result<VocabularyMap, FormatError> {
    let v: VocabularyMap = serde_json::from_str(input).map_err(|source| FormatError::Json { line: 1, source })?;
    v.validate()?;
    Ok(v)
}
