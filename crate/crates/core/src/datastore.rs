//! Emotion labels, manifests, RAVDESS filename parsing, the binary feature
//! cache, and stratified clip-level splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::features::FEATURE_DIM;

pub const CACHE_MAGIC: &[u8; 4] = b"EAFV";
pub const CACHE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad RAVDESS filename {0:?}: expected 7 dash-separated two-digit fields")]
    BadFilename(String),
    #[error("unknown RAVDESS emotion code {0:?}")]
    UnknownEmotionCode(String),
    #[error("manifest header must be `path,label,clip_id`, found {0:?}")]
    BadHeader(String),
    #[error("unknown label {label:?} on manifest line {line}")]
    UnknownLabel { label: String, line: usize },
    #[error("duplicate path {0:?} in manifest")]
    DuplicatePath(PathBuf),
    #[error("malformed manifest line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("not a feature cache (bad magic)")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    VersionMismatch(u16),
    #[error("feature cache is truncated")]
    TruncatedFile,
    #[error("feature dimension {found}, expected {expected}")]
    DimMismatch { found: usize, expected: usize },
    #[error("invalid record: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The seven emotion classes with stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmotionLabel {
    Neutral = 0,
    Happy = 1,
    Sad = 2,
    Angry = 3,
    Fear = 4,
    Disgust = 5,
    Surprise = 6,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 7] = [
        Self::Neutral,
        Self::Happy,
        Self::Sad,
        Self::Angry,
        Self::Fear,
        Self::Disgust,
        Self::Surprise,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Neutral => "neutral",
            Self::Happy => "happy",
            Self::Sad => "sad",
            Self::Angry => "angry",
            Self::Fear => "fear",
            Self::Disgust => "disgust",
            Self::Surprise => "surprise",
        }
    }

    pub fn names() -> [&'static str; 7] {
        Self::ALL.map(Self::name)
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|l| l.name() == s).ok_or(())
    }
}

/// What to do with RAVDESS "calm" (code 02).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalmPolicy {
    #[default]
    MergeIntoNeutral,
    Drop,
}

/// Emotion from a RAVDESS file name such as `03-01-05-01-02-01-12.wav`.
/// Returns `None` only for calm clips under [`CalmPolicy::Drop`].
pub fn parse_ravdess_filename_with(name: &str, calm: CalmPolicy) -> Result<Option<EmotionLabel>, DataError> {
    let file = Path::new(name).file_name().and_then(|f| f.to_str()).unwrap_or(name);
    let stem = file.rsplit_once('.').map_or(file, |(s, _)| s);
    let fields: Vec<&str> = stem.split('-').collect();
    if fields.len() != 7 || fields.iter().any(|f| f.len() != 2 || !f.bytes().all(|b| b.is_ascii_digit())) {
        return Err(DataError::BadFilename(name.to_string()));
    }
    let label = match fields[2] {
        "01" => EmotionLabel::Neutral,
        "02" => match calm {
            CalmPolicy::MergeIntoNeutral => EmotionLabel::Neutral,
            CalmPolicy::Drop => return Ok(None),
        },
        "03" => EmotionLabel::Happy,
        "04" => EmotionLabel::Sad,
        "05" => EmotionLabel::Angry,
        "06" => EmotionLabel::Fear,
        "07" => EmotionLabel::Disgust,
        "08" => EmotionLabel::Surprise,
        other => return Err(DataError::UnknownEmotionCode(other.to_string())),
    };
    Ok(Some(label))
}

/// Emotion from a RAVDESS file name, calm merged into neutral.
pub fn parse_ravdess_filename(name: &str) -> Result<EmotionLabel, DataError> {
    parse_ravdess_filename_with(name, CalmPolicy::MergeIntoNeutral)
        .map(|l| l.expect("merge policy always yields a label"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: EmotionLabel,
    pub clip_id: String,
}

/// Reads a `path,label,clip_id` CSV; relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DataError> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(File::open(path)?, &base)
}

pub fn parse_manifest<R: Read>(reader: R, base: &Path) -> Result<Vec<ManifestEntry>, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv.headers().map_err(|e| DataError::BadHeader(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["path", "label", "clip_id"] {
        return Err(DataError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DataError::BadRow {
            line,
            reason: e.to_string(),
        })?;
        let (p, label, clip_id) = (&row[0], &row[1], &row[2]);
        if p.is_empty() || clip_id.is_empty() {
            return Err(DataError::BadRow {
                line,
                reason: "empty path or clip_id".into(),
            });
        }
        let label = label.parse().map_err(|()| DataError::UnknownLabel {
            label: label.to_string(),
            line,
        })?;
        let p = Path::new(p);
        let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        if !seen.insert(full.clone()) {
            return Err(DataError::DuplicatePath(full));
        }
        entries.push(ManifestEntry {
            path: full,
            label,
            clip_id: clip_id.to_string(),
        });
    }
    Ok(entries)
}

/// One cached feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub clip_id: String,
    pub variant: u8,
    pub label: EmotionLabel,
    pub features: Vec<f32>,
}

pub fn write_cache_to<W: Write>(w: &mut W, records: &[CacheRecord]) -> Result<(), DataError> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    w.write_all(&(FEATURE_DIM as u32).to_le_bytes())?;
    for r in records {
        if r.features.len() != FEATURE_DIM {
            return Err(DataError::DimMismatch {
                found: r.features.len(),
                expected: FEATURE_DIM,
            });
        }
        let id = r.clip_id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| DataError::BadRecord("clip_id longer than 65535 bytes".into()))?;
        w.write_all(&id_len.to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&[r.variant, r.label.code()])?;
        let bytes: Vec<u8> = r.features.iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_cache_from<R: Read>(r: &mut R) -> Result<Vec<CacheRecord>, DataError> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(DataError::BadMagic);
    }
    let mut b2 = [0u8; 2];
    read_exact(r, &mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != CACHE_VERSION {
        return Err(DataError::VersionMismatch(version));
    }
    let mut b8 = [0u8; 8];
    read_exact(r, &mut b8)?;
    let count = u64::from_le_bytes(b8);
    let mut b4 = [0u8; 4];
    read_exact(r, &mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    if dim != FEATURE_DIM {
        return Err(DataError::DimMismatch {
            found: dim,
            expected: FEATURE_DIM,
        });
    }
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut buf = vec![0u8; 4 * dim];
    for _ in 0..count {
        read_exact(r, &mut b2)?;
        let mut id = vec![0u8; u16::from_le_bytes(b2) as usize];
        read_exact(r, &mut id)?;
        let clip_id = String::from_utf8(id).map_err(|_| DataError::BadRecord("clip_id is not UTF-8".into()))?;
        read_exact(r, &mut b2)?;
        let (variant, code) = (b2[0], b2[1]);
        let label =
            EmotionLabel::from_code(code).ok_or_else(|| DataError::BadRecord(format!("label code {code}")))?;
        read_exact(r, &mut buf)?;
        let features = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        records.push(CacheRecord {
            clip_id,
            variant,
            label,
            features,
        });
    }
    Ok(records)
}

pub fn write_cache(path: &Path, records: &[CacheRecord]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cache_to(&mut w, records)?;
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<Vec<CacheRecord>, DataError> {
    read_cache_from(&mut BufReader::new(File::open(path)?))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), DataError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DataError::TruncatedFile,
        _ => DataError::Io(e),
    })
}

/// Disjoint train/validation/test sets of clip ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn part_of(&self, clip_id: &str) -> Option<SplitPart> {
        if self.train.iter().any(|c| c == clip_id) {
            Some(SplitPart::Train)
        } else if self.val.iter().any(|c| c == clip_id) {
            Some(SplitPart::Val)
        } else if self.test.iter().any(|c| c == clip_id) {
            Some(SplitPart::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

/// Splits unique clip ids class by class: each class's ids are sorted,
/// shuffled with `seed`, and cut at rounded proportions.
pub fn stratified_split<'a>(
    clips: impl IntoIterator<Item = (&'a str, EmotionLabel)>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Split {
    let mut by_class: BTreeMap<EmotionLabel, Vec<&str>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (id, label) in clips {
        if seen.insert(id) {
            by_class.entry(label).or_default().push(id);
        }
    }
    let total = ratios.0 + ratios.1 + ratios.2;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut split = Split::default();
    for ids in by_class.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_train = ((n as f64 * ratios.0 / total).round() as usize).min(n);
        let n_val = ((n as f64 * ratios.1 / total).round() as usize).min(n - n_train);
        split.train.extend(ids[..n_train].iter().map(|s| s.to_string()));
        split.val.extend(ids[n_train..n_train + n_val].iter().map(|s| s.to_string()));
        split.test.extend(ids[n_train + n_val..].iter().map(|s| s.to_string()));
    }
    split
}
