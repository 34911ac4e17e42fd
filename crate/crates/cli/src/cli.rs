use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sotkit::analysis::DEFAULT_K;
use sotkit::frames::{DEFAULT_FRAME_PERIOD, DEFAULT_MERGE_GAP, DEFAULT_MIN_SEGMENT, DEFAULT_SHRINK, DEFAULT_SILENCE_THRESHOLD};
use sotkit::grammar::WINDOW_SECONDS;
use sotkit::loss::DEFAULT_LAMBDA_DIAR;
use sotkit::model::SpeakerRole;
use sotkit::sessions::{DEFAULT_MAX_WORD_DURATION, DEFAULT_UTTERANCE_GAP};

const FORMATS: &str = "\
File formats:
  transcript JSONL   {\"start\": s, \"end\": s, \"speaker\": \"child\"|\"adult\", \"text\": \"...\"} per line, sorted by start
  word JSONL         {\"start\": s, \"end\": s, \"word\": \"...\", \"speaker\"?: \"child\"|\"adult\"} per line
  token JSON         [{\"class\": \"header\"|\"ts\"|\"child\"|\"adult\"|\"text\"|\"eot\", \"value\"?: n, \"word\"?: \"...\"}, ...]
                     or {\"tokens\": [...], \"truncated\": bool}; timestamps are 0.02 s grid indices 0..=1500
  RTTM               SPEAKER <uri> 1 <tbeg> <tdur> <NA> <NA> <child|adult> <NA> <NA>
  frame CSV          t,p_child,p_adult,p_sil
  embeddings CSV     id,label,v0,...,vD
  measures CSV       child_id,words_per_minute,utterances_per_minute,mean_words_per_utterance,
                     mean_utterance_duration_s,speaking_rate_wpm

Exit codes: 0 success, 1 data error (JSON on stderr), 2 usage error.";

#[derive(Debug, Parser)]
#[command(name = "sotkit", version, about = "Speaker-attributed transcript tools: serialization, forced decoding, scoring", after_help = FORMATS)]
pub struct Cli {
    /// Worker threads for file-level and trial-level parallelism.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
    /// Print raw ratios instead of percentages.
    #[arg(long, global = true)]
    pub raw: bool,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the result here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count structural errors in a token stream (JSON report).
    Validate {
        #[arg(long)]
        tokens: PathBuf,
    },
    /// Parse a token stream into transcript JSONL.
    Parse {
        #[arg(long)]
        tokens: PathBuf,
    },
    /// Serialize a transcript of at most 30 s into token JSON.
    Serialize {
        #[arg(long)]
        transcript: PathBuf,
    },
    /// mtWER, WER and AER per role from transcript JSONL pairs.
    ScoreAsr {
        /// Reference transcripts; pairs with --hyp in order.
        #[arg(long = "ref", required = true)]
        reference: Vec<PathBuf>,
        #[arg(long, required = true)]
        hyp: Vec<PathBuf>,
    },
    /// Diarization error rate from RTTM pairs.
    ScoreDer {
        #[arg(long = "ref", required = true)]
        reference: Vec<PathBuf>,
        #[arg(long, required = true)]
        hyp: Vec<PathBuf>,
        /// Seconds excluded around each reference boundary.
        #[arg(long, default_value_t = 0.0)]
        collar: f64,
    },
    /// Clean, merge and window a session into segments of complete utterances.
    Segment(SegmentArgs),
    /// Frame labels from a transcript, or postprocessed RTTM from frame probabilities.
    Frames(FramesArgs),
    /// Silence regions for timestamp suppression, as CSV start,end.
    Suppress {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SILENCE_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_SHRINK)]
        shrink: f64,
    },
    /// Assign each word the role with the higher mean log probability.
    Attribute {
        /// Word JSONL; speakers, if present, are ignored.
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        probs: PathBuf,
    },
    /// Cross-entropy losses from probability CSVs.
    Loss {
        /// CSV target,p0,p1,... per decoding step.
        #[arg(long)]
        asr: PathBuf,
        /// CSV label,p_child,p_adult,p_sil per frame.
        #[arg(long)]
        diar: PathBuf,
        #[arg(long = "lambda", default_value_t = DEFAULT_LAMBDA_DIAR)]
        lambda_diar: f64,
    },
    /// Per-child speech measures from session transcripts.
    SpeechMetrics {
        /// CHILD_ID=PATH to a transcript JSONL; repeat an id to pool sessions.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value_t = SpeakerRole::Child)]
        role: SpeakerRole,
        #[arg(long, default_value_t = WINDOW_SECONDS)]
        window: f64,
    },
    /// Ground-truth vs predicted measure agreement (means and PCC).
    Agreement {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// k-nearest-neighbour role probe under cosine distance.
    Knn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(short, long, default_value_t = DEFAULT_K)]
        k: usize,
    },
    /// Structural error rates of simulated decodes with and without forced decoding.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Word JSONL with speakers.
    #[arg(long, conflicts_with = "transcript", required_unless_present = "transcript")]
    pub words: Option<PathBuf>,
    /// Transcript JSONL, windowed as is.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Words longer than this are dropped.
    #[arg(long, default_value_t = DEFAULT_MAX_WORD_DURATION)]
    pub max_word: f64,
    /// Same-role words closer than this join one utterance.
    #[arg(long, default_value_t = DEFAULT_UTTERANCE_GAP)]
    pub gap: f64,
    #[arg(long, default_value_t = WINDOW_SECONDS)]
    pub window: f64,
}

#[derive(Debug, Args)]
pub struct FramesArgs {
    /// Transcript JSONL to rasterize into frame labels.
    #[arg(long, conflicts_with = "probs", required_unless_present = "probs")]
    pub transcript: Option<PathBuf>,
    /// Frame CSV to turn into role segments.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FRAME_PERIOD)]
    pub period: f64,
    /// End of the rasterized span; defaults to the last utterance end.
    #[arg(long)]
    pub end: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MERGE_GAP)]
    pub merge_gap: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SEGMENT)]
    pub min_dur: f64,
    /// Recording name in RTTM output.
    #[arg(long, default_value = "session")]
    pub uri: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.0)]
    pub p_drop_speaker: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_drop_timestamp: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_loop: f64,
    #[arg(long, default_value_t = 6)]
    pub n_utterances: usize,
    #[arg(long, default_value_t = 4)]
    pub max_words: usize,
}
