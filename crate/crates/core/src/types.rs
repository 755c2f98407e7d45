//! Domain types shared by every module: vocabulary, posterior matrix,
//! labelings and n-best lists.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the per-frame sum of a posterior row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Name used for the blank symbol in text formats.
pub const BLANK_NAME: &str = "<blank>";

/// Opaque symbol identifier: the column index in the [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub u32);

impl Symbol {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for Symbol {
    fn from(index: usize) -> Self {
        Symbol(index as u32)
    }
}

/// Output vocabulary of a recognizer, including the blank symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    blank: Symbol,
    index: HashMap<String, Symbol>,
    char_level: bool,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(names: Vec<S>, blank_index: usize) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidVocabulary(format!(
                "need a blank and at least one letter, got {} symbols",
                names.len()
            )));
        }
        if blank_index >= names.len() {
            return Err(Error::InvalidVocabulary(format!(
                "blank index {blank_index} out of range for {} symbols",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), Symbol::from(i)).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate symbol {name:?}")));
            }
        }
        let char_level = names
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != blank_index)
            .all(|(_, n)| n.chars().count() == 1);
        Ok(Vocabulary {
            names,
            blank: Symbol::from(blank_index),
            index,
            char_level,
        })
    }

    /// Vocabulary with the blank first followed by one symbol per character.
    pub fn from_chars(letters: &str) -> Result<Self> {
        let mut names = vec![BLANK_NAME.to_string()];
        names.extend(letters.chars().map(String::from));
        Vocabulary::new(names, 0)
    }

    /// Vocabulary of `size` symbols with blank at index 0 and letters named
    /// `s1`, `s2`, ... Useful for synthetic data.
    pub fn synthetic(size: usize) -> Result<Self> {
        let mut names = vec![BLANK_NAME.to_string()];
        names.extend((1..size).map(|i| format!("s{i}")));
        Vocabulary::new(names, 0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    #[inline]
    pub fn blank(&self) -> Symbol {
        self.blank
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, symbol: Symbol) -> &str {
        &self.names[symbol.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<Symbol> {
        self.index.get(name).copied()
    }

    /// True when every letter is a single character, so transcripts can be
    /// written as plain strings.
    pub fn is_char_level(&self) -> bool {
        self.char_level
    }

    /// Non-blank symbols in vocabulary order.
    pub fn letters(&self) -> impl Iterator<Item = Symbol> + '_ {
        let blank = self.blank;
        (0..self.names.len()).map(Symbol::from).filter(move |&s| s != blank)
    }

    /// Parses a transcript into a labeling. Character-level vocabularies read
    /// the text one character at a time; otherwise symbols are separated by
    /// whitespace.
    pub fn parse_transcript(&self, text: &str) -> Result<Labeling> {
        let mut symbols = Vec::new();
        if self.char_level {
            let mut buf = [0u8; 4];
            for c in text.chars() {
                let name: &str = c.encode_utf8(&mut buf);
                symbols.push(self.lookup(name).ok_or_else(|| Error::UnknownSymbol(name.into()))?);
            }
        } else {
            for token in text.split_whitespace() {
                symbols.push(self.lookup(token).ok_or_else(|| Error::UnknownSymbol(token.into()))?);
            }
        }
        let labeling = Labeling(symbols);
        labeling.validate(self)?;
        Ok(labeling)
    }

    /// Inverse of [`Vocabulary::parse_transcript`].
    pub fn render(&self, labeling: &Labeling) -> String {
        let parts = labeling.0.iter().map(|&s| self.name(s));
        if self.char_level {
            parts.collect()
        } else {
            parts.collect::<Vec<_>>().join(" ")
        }
    }
}

/// Frame-wise symbol distributions produced by a network: `frames` rows of
/// `width` probabilities, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorMatrix<F = f64> {
    frames: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Scalar> PosteriorMatrix<F> {
    /// Wraps a row-major buffer. Only the buffer length is checked; use
    /// [`validate_posteriors`] for the probability invariants. Unnormalized
    /// matrices are accepted on purpose so losses can be differentiated
    /// entry by entry.
    pub fn from_flat(frames: usize, width: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != frames * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{frames}x{width} = {} entries", frames * width),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(PosteriorMatrix { frames, width, data })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * width);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    expected: format!("{width} columns"),
                    found: format!("{} columns in row {t}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(PosteriorMatrix {
            frames: rows.len(),
            width,
            data,
        })
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> F {
        self.data[t * self.width + k]
    }

    #[inline]
    pub fn set(&mut self, t: usize, k: usize, value: F) {
        self.data[t * self.width + k] = value;
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.width.max(1)).take(self.frames)
    }

    /// Copy of frames `start..end`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Self {
        PosteriorMatrix {
            frames: end - start,
            width: self.width,
            data: self.data[start * self.width..end * self.width].to_vec(),
        }
    }

    /// Converts to another scalar type.
    pub fn cast<G: Scalar>(&self) -> PosteriorMatrix<G> {
        PosteriorMatrix {
            frames: self.frames,
            width: self.width,
            data: self.data.iter().map(|&v| G::of(v.widen())).collect(),
        }
    }
}

/// Checks the probability invariants of `m` against `vocab`.
pub fn validate_posteriors<F: Scalar>(m: &PosteriorMatrix<F>, vocab: &Vocabulary) -> Result<()> {
    if m.width() != vocab.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} columns", vocab.len()),
            found: format!("{} columns", m.width()),
        });
    }
    if m.frames() == 0 {
        return Err(Error::EmptyPosteriors);
    }
    for (t, row) in m.rows().enumerate() {
        let mut sum = 0.0;
        for (k, &v) in row.iter().enumerate() {
            let v = v.widen();
            if v.is_nan() || v < 0.0 {
                return Err(Error::NegativeEntry { frame: t, symbol: k });
            }
            sum += v;
        }
        if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
            return Err(Error::RowNotNormalized(t));
        }
    }
    Ok(())
}

/// A blank-free symbol sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Labeling(pub Vec<Symbol>);

impl Labeling {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Labeling(symbols)
    }

    pub fn empty() -> Self {
        Labeling(Vec::new())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    /// Checks that every symbol exists in `vocab` and none is the blank.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        for (i, &s) in self.0.iter().enumerate() {
            if s.index() >= vocab.len() {
                return Err(Error::UnknownSymbol(format!("#{}", s.0)));
            }
            if s == vocab.blank() {
                return Err(Error::BlankInLabeling(i));
            }
        }
        Ok(())
    }
}

impl From<Vec<Symbol>> for Labeling {
    fn from(symbols: Vec<Symbol>) -> Self {
        Labeling(symbols)
    }
}

impl fmt::Display for Labeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.0.to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// Weighted list of whole-line transcription variants.
///
/// Weights are positive but need not sum to one: beam-search scores
/// under-estimate the true posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct NBestList {
    entries: Vec<(Labeling, f64)>,
}

impl NBestList {
    pub fn new(entries: Vec<(Labeling, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (labeling, weight) in &entries {
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(Error::InvalidNBest(format!("weight {weight} is not positive")));
            }
            if !seen.insert(labeling) {
                return Err(Error::InvalidNBest(format!("duplicate labeling {labeling}")));
            }
        }
        Ok(NBestList { entries })
    }

    pub fn entries(&self) -> &[(Labeling, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// Same list with weights rescaled to sum to one.
    pub fn normalized(&self) -> NBestList {
        let total = self.total_weight();
        NBestList {
            entries: self.entries.iter().map(|(l, w)| (l.clone(), w / total)).collect(),
        }
    }

    /// Entries ordered by descending weight. Ties keep their input order.
    pub fn sorted_desc(&self) -> Vec<(Labeling, f64)> {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        entries
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        self.entries.iter().try_for_each(|(l, _)| l.validate(vocab))
    }
}
