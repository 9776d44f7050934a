//! Pretrained word vectors: loading, vocabulary filtering, cosine similarity
//! and exact nearest-neighbor search.
//!
//! A table keeps the vectors exactly as they were read. Norms are computed
//! once at construction so that cosine similarity is a single dot product
//! scaled by two cached reciprocals.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated vector data at entry {entry}")]
    Truncated { entry: usize },
    #[error("entry {entry} ({word:?}) has {found} components, expected {expected}")]
    DimensionMismatch {
        entry: usize,
        word: String,
        found: usize,
        expected: usize,
    },
    #[error("malformed entry {entry}: {reason}")]
    Malformed { entry: usize, reason: String },
    #[error("vocabulary is empty")]
    Empty,
    #[error("duplicate word {0:?}")]
    Duplicate(String),
    #[error("vector for {0:?} has a non-finite component or zero norm")]
    DegenerateVector(String),
    #[error("{0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
}

/// On-disk vector formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorFormat {
    Word2vecBinary,
    Word2vecText,
}

impl VectorFormat {
    /// Guess from a file extension: `.txt`/`.vec` are text, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") | Some("vec") => VectorFormat::Word2vecText,
            _ => VectorFormat::Word2vecBinary,
        }
    }
}

impl FromStr for VectorFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word2vec-binary" | "binary" | "bin" => Ok(VectorFormat::Word2vecBinary),
            "word2vec-text" | "text" | "txt" => Ok(VectorFormat::Word2vecText),
            other => Err(format!("unknown vector format {other:?}")),
        }
    }
}

impl fmt::Display for VectorFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VectorFormat::Word2vecBinary => "word2vec-binary",
            VectorFormat::Word2vecText => "word2vec-text",
        })
    }
}

/// Syntactic vocabulary rules used to drop acronyms, brand names and
/// punctuation-bearing tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabFilterRules {
    pub require_all_lowercase: bool,
    pub require_alphabetic_only: bool,
    pub min_length: usize,
}

impl Default for VocabFilterRules {
    fn default() -> Self {
        VocabFilterRules {
            require_all_lowercase: true,
            require_alphabetic_only: true,
            min_length: 1,
        }
    }
}

impl VocabFilterRules {
    pub fn accepts(&self, token: &str) -> bool {
        if token.chars().count() < self.min_length.max(1) {
            return false;
        }
        if self.require_alphabetic_only && !token.bytes().all(|b| b.is_ascii_alphabetic()) {
            return false;
        }
        if self.require_all_lowercase && token.chars().any(|c| c.is_uppercase()) {
            return false;
        }
        true
    }
}

/// Vocabulary plus one dense vector per word.
///
/// Immutable once built; share it behind an `Arc` across threads.
#[derive(Clone)]
pub struct EmbeddingTable {
    words: Vec<String>,
    data: Vec<f32>,
    dim: usize,
    inv_norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl fmt::Debug for EmbeddingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingTable")
            .field("len", &self.words.len())
            .field("dim", &self.dim)
            .finish()
    }
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.words == other.words && self.data == other.data
    }
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` rows.
    ///
    /// Words must be non-empty, whitespace-free and unique; vectors must all
    /// have the same length, finite components and a nonzero norm.
    pub fn from_rows<I, S>(rows: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut builder: Option<Builder> = None;
        for (entry, (word, vector)) in rows.into_iter().enumerate() {
            let b = builder.get_or_insert_with(|| Builder::new(vector.len(), 0));
            b.push(entry, word.into(), &vector)?;
        }
        builder.ok_or(EmbeddingError::Empty)?.finish()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, row: usize) -> &str {
        &self.words[row]
    }

    pub fn row_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.row_of(word).map(|r| self.row(r))
    }

    /// Euclidean norm of a row.
    pub fn norm(&self, row: usize) -> f64 {
        1.0 / self.inv_norms[row]
    }

    /// Unit-length copy of a row in double precision.
    pub fn unit_vector(&self, row: usize) -> Vec<f64> {
        let inv = self.inv_norms[row];
        self.row(row).iter().map(|&x| f64::from(x) * inv).collect()
    }

    /// Cosine similarity between two rows, clamped to `[-1, 1]`.
    pub fn cosine_rows(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        let dot = dot(self.row(a), self.row(b));
        (dot * self.inv_norms[a] * self.inv_norms[b]).clamp(-1.0, 1.0)
    }

    /// Cosine similarity between two words.
    pub fn cosine(&self, word_a: &str, word_b: &str) -> Result<f64, EmbeddingError> {
        let a = self.require(word_a)?;
        let b = self.require(word_b)?;
        Ok(self.cosine_rows(a, b))
    }

    fn require(&self, word: &str) -> Result<usize, EmbeddingError> {
        self.row_of(word)
            .ok_or_else(|| EmbeddingError::OutOfVocabulary(word.to_string()))
    }

    /// The `k` most similar words to `word`, excluding the query itself and
    /// anything in `exclude`. Sorted by descending similarity, ties by
    /// ascending word. Returns fewer than `k` entries when candidates run out.
    pub fn nearest_neighbors(
        &self,
        word: &str,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<(String, f64)>, EmbeddingError> {
        let query = self.require(word)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut candidates: Vec<(usize, f64)> = (0..self.len())
            .filter(|&r| r != query && !exclude.contains(&self.words[r]))
            .map(|r| (r, self.cosine_rows(query, r)))
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.words[a.0].cmp(&self.words[b.0]))
        };
        if candidates.len() > k {
            candidates.select_nth_unstable_by(k - 1, order);
            candidates.truncate(k);
        }
        candidates.sort_unstable_by(order);
        Ok(candidates
            .into_iter()
            .map(|(r, s)| (self.words[r].clone(), s))
            .collect())
    }

    /// Keeps the rows whose token satisfies every rule, in their original order.
    pub fn filter_vocabulary(&self, rules: &VocabFilterRules) -> Result<Self, EmbeddingError> {
        let mut b = Builder::new(self.dim, 0);
        for (r, w) in self.words.iter().enumerate() {
            if rules.accepts(w) {
                b.push(r, w.clone(), self.row(r))?;
            }
        }
        b.finish()
    }

    pub fn load_path(path: &Path, format: VectorFormat) -> Result<Self, EmbeddingError> {
        let file = std::fs::File::open(path)?;
        Self::load(BufReader::with_capacity(1 << 20, file), format)
    }

    /// Reads a word2vec file. Vectors are stored exactly as read.
    pub fn load<R: BufRead>(reader: R, format: VectorFormat) -> Result<Self, EmbeddingError> {
        match format {
            VectorFormat::Word2vecBinary => load_binary(reader),
            VectorFormat::Word2vecText => load_text(reader),
        }
    }

    pub fn write<W: Write>(&self, mut out: W, format: VectorFormat) -> io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (r, w) in self.words.iter().enumerate() {
            match format {
                VectorFormat::Word2vecBinary => {
                    out.write_all(w.as_bytes())?;
                    out.write_all(b" ")?;
                    for x in self.row(r) {
                        out.write_all(&x.to_le_bytes())?;
                    }
                    out.write_all(b"\n")?;
                }
                VectorFormat::Word2vecText => {
                    out.write_all(w.as_bytes())?;
                    for x in self.row(r) {
                        // `{}` on f32 prints the shortest string that parses back exactly.
                        write!(out, " {x}")?;
                    }
                    out.write_all(b"\n")?;
                }
            }
        }
        out.flush()
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

struct Builder {
    dim: usize,
    words: Vec<String>,
    data: Vec<f32>,
    inv_norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Builder {
    fn new(dim: usize, capacity: usize) -> Self {
        Builder {
            dim,
            words: Vec::with_capacity(capacity),
            data: Vec::with_capacity(capacity.saturating_mul(dim)),
            inv_norms: Vec::with_capacity(capacity),
            index: HashMap::with_capacity(capacity),
        }
    }

    fn push(&mut self, entry: usize, word: String, vector: &[f32]) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                entry,
                word,
                found: vector.len(),
                expected: self.dim,
            });
        }
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(EmbeddingError::Malformed {
                entry,
                reason: format!("invalid token {word:?}"),
            });
        }
        let norm = dot(vector, vector).sqrt();
        if !norm.is_finite() || norm == 0.0 || vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::DegenerateVector(word));
        }
        if self.index.contains_key(&word) {
            return Err(EmbeddingError::Duplicate(word));
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        self.inv_norms.push(1.0 / norm);
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingTable, EmbeddingError> {
        if self.words.is_empty() || self.dim == 0 {
            return Err(EmbeddingError::Empty);
        }
        Ok(EmbeddingTable {
            words: self.words,
            data: self.data,
            dim: self.dim,
            inv_norms: self.inv_norms,
            index: self.index,
        })
    }
}

fn parse_header(line: &str) -> Result<(usize, usize), EmbeddingError> {
    let mut parts = line.split_whitespace();
    let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => (c, d),
        _ => return Err(EmbeddingError::Header(line.trim_end().to_string())),
    };
    let count: usize = count
        .parse()
        .map_err(|_| EmbeddingError::Header(line.trim_end().to_string()))?;
    let dim: usize = dim
        .parse()
        .map_err(|_| EmbeddingError::Header(line.trim_end().to_string()))?;
    if count == 0 {
        return Err(EmbeddingError::Empty);
    }
    if dim == 0 {
        return Err(EmbeddingError::Header("dimension must be positive".into()));
    }
    Ok((count, dim))
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<(usize, usize), EmbeddingError> {
    let mut raw = Vec::new();
    reader.read_until(b'\n', &mut raw)?;
    let line = std::str::from_utf8(&raw)
        .map_err(|_| EmbeddingError::Header("header is not ASCII".into()))?;
    parse_header(line)
}

fn load_text<R: BufRead>(mut reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let (count, dim) = read_header(&mut reader)?;
    let mut b = Builder::new(dim, count);
    let mut line = String::new();
    let mut entry = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        if entry == count {
            return Err(EmbeddingError::Malformed {
                entry,
                reason: format!("more entries than the header's {count}"),
            });
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().unwrap_or_default().to_string();
        let vector = fields
            .map(|f| {
                f.parse::<f32>().map_err(|_| EmbeddingError::Malformed {
                    entry,
                    reason: format!("bad float {f:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        b.push(entry, word, &vector)?;
        entry += 1;
    }
    if entry < count {
        return Err(EmbeddingError::Truncated { entry });
    }
    b.finish()
}

fn load_binary<R: BufRead>(mut reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let (count, dim) = read_header(&mut reader)?;
    let mut b = Builder::new(dim, count.min(1 << 22));
    let mut word = Vec::with_capacity(64);
    let mut bytes = vec![0u8; dim * 4];
    let mut vector = vec![0f32; dim];
    for entry in 0..count {
        word.clear();
        if reader.read_until(b' ', &mut word)? == 0 || word.last() != Some(&b' ') {
            return Err(EmbeddingError::Truncated { entry });
        }
        word.pop();
        // The optional newline after the previous vector ends up in front of the word.
        let start = word.iter().position(|&c| c != b'\n').unwrap_or(word.len());
        let token = String::from_utf8_lossy(&word[start..]).into_owned();
        read_exact_or_truncated(&mut reader, &mut bytes, entry)?;
        for (x, chunk) in vector.iter_mut().zip(bytes.chunks_exact(4)) {
            *x = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        b.push(entry, token, &vector)?;
    }
    b.finish()
}

fn read_exact_or_truncated<R: Read>(
    reader: &mut R,
    buf: &mut [u8],
    entry: usize,
) -> Result<(), EmbeddingError> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => EmbeddingError::Truncated { entry },
        _ => EmbeddingError::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbeddingTable {
        EmbeddingTable::from_rows([
            ("east", vec![1.0, 0.0]),
            ("north", vec![0.0, 1.0]),
            ("slant", vec![0.6, 0.8]),
        ])
        .unwrap()
    }

    #[test]
    fn minimal_text_file() {
        let src = "2 3\nriver 1 0 0\nboat 0 1 0\n";
        let t = EmbeddingTable::load(src.as_bytes(), VectorFormat::Word2vecText).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.vector("boat").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn load_errors() {
        let bad = |s: &str| EmbeddingTable::load(s.as_bytes(), VectorFormat::Word2vecText);
        assert!(matches!(bad("two 3\n"), Err(EmbeddingError::Header(_))));
        assert!(matches!(bad("0 3\n"), Err(EmbeddingError::Empty)));
        assert!(matches!(
            bad("2 3\nriver 1 0 0\n"),
            Err(EmbeddingError::Truncated { entry: 1 })
        ));
        assert!(matches!(
            bad("1 3\nriver 1 0\n"),
            Err(EmbeddingError::DimensionMismatch { found: 2, .. })
        ));
        assert!(matches!(
            bad("1 2\nriver 0 0\n"),
            Err(EmbeddingError::DegenerateVector(_))
        ));
    }

    #[test]
    fn binary_round_trip_and_truncation() {
        let t = toy();
        let mut buf = Vec::new();
        t.write(&mut buf, VectorFormat::Word2vecBinary).unwrap();
        let back = EmbeddingTable::load(&buf[..], VectorFormat::Word2vecBinary).unwrap();
        assert_eq!(back, t);

        // Without the trailing newline bytes the format is still valid.
        let mut tight = b"1 2\nabc ".to_vec();
        tight.extend_from_slice(&1.5f32.to_le_bytes());
        tight.extend_from_slice(&(-2.0f32).to_le_bytes());
        let one = EmbeddingTable::load(&tight[..], VectorFormat::Word2vecBinary).unwrap();
        assert_eq!(one.vector("abc").unwrap(), &[1.5, -2.0]);

        let cut = &buf[..buf.len() - 6];
        assert!(matches!(
            EmbeddingTable::load(cut, VectorFormat::Word2vecBinary),
            Err(EmbeddingError::Truncated { entry: 2 })
        ));
    }

    #[test]
    fn cosine_toy_values() {
        let t = toy();
        assert_eq!(t.cosine("east", "east").unwrap(), 1.0);
        assert_eq!(t.cosine("east", "north").unwrap(), 0.0);
        assert!((t.cosine("east", "slant").unwrap() - 0.6).abs() < 1e-7);
        assert!(matches!(
            t.cosine("east", "west"),
            Err(EmbeddingError::OutOfVocabulary(_))
        ));
    }

    #[test]
    fn filter_drops_acronyms_and_punctuation() {
        let t = EmbeddingTable::from_rows([
            ("NASA", vec![1.0, 0.0]),
            ("river", vec![0.0, 1.0]),
            ("e.g", vec![1.0, 1.0]),
            ("don't", vec![1.0, 2.0]),
            ("Boat", vec![2.0, 1.0]),
        ])
        .unwrap();
        let f = t.filter_vocabulary(&VocabFilterRules::default()).unwrap();
        assert_eq!(f.words(), &["river".to_string()]);

        let only_acronyms = EmbeddingTable::from_rows([("NASA", vec![1.0])]).unwrap();
        assert!(matches!(
            only_acronyms.filter_vocabulary(&VocabFilterRules::default()),
            Err(EmbeddingError::Empty)
        ));
    }

    #[test]
    fn neighbors_exclusion_and_exhaustion() {
        let t = toy();
        let nn = t.nearest_neighbors("east", 1, &HashSet::new()).unwrap();
        assert_eq!(nn[0].0, "slant");
        let all_but_query: HashSet<String> =
            ["north", "slant"].iter().map(|s| s.to_string()).collect();
        assert!(t.nearest_neighbors("east", 5, &all_but_query).unwrap().is_empty());
        let few = t.nearest_neighbors("east", 10, &HashSet::new()).unwrap();
        assert_eq!(few.len(), 2);
    }

    #[test]
    fn neighbor_ties_break_lexicographically() {
        let t = EmbeddingTable::from_rows([
            ("q", vec![1.0, 0.0]),
            ("zeta", vec![0.0, 1.0]),
            ("alpha", vec![0.0, -1.0]),
            ("mid", vec![0.0, 2.0]),
        ])
        .unwrap();
        let nn = t.nearest_neighbors("q", 3, &HashSet::new()).unwrap();
        let words: Vec<_> = nn.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, ["alpha", "mid", "zeta"]);
    }
}
