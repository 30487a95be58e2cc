//! Invertible residue-scale embedding of peptides into fixed 5x100 matrices.
//!
//! Each residue maps to a 5-vector of physicochemical scale values, standardized
//! per dimension over the 20 residues. Decoding picks the nearest of the 21
//! codewords (20 residues + PAD) column by column and stops at the first PAD.

use std::io::{BufRead, Read, Write};
use std::sync::LazyLock;

use crate::data;
use crate::error::{Error, Result};
use crate::seq::{PeptideSequence, Residue, MAX_LENGTH};

/// Number of residue scales (rows of an embedding).
pub const NUM_SCALES: usize = 5;
/// Number of positions (columns of an embedding).
pub const EMBED_LEN: usize = MAX_LENGTH;
/// Minimum standardized norm of every residue codeword, keeping PAD (the origin) distinct.
pub const DEFAULT_PAD_MARGIN: f64 = 0.5;

pub type Codeword = [f64; NUM_SCALES];

/// Residue or padding symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Residue(Residue),
    Pad,
}

impl Token {
    /// The 20 residues in alphabetical order followed by PAD; also the decoding tie order.
    pub fn all() -> impl Iterator<Item = Token> {
        Residue::ALL
            .into_iter()
            .map(Token::Residue)
            .chain(std::iter::once(Token::Pad))
    }

    fn label(self) -> String {
        match self {
            Token::Residue(r) => r.to_string(),
            Token::Pad => "PAD".into(),
        }
    }
}

/// Raw per-residue scale values plus the PAD codeword.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleTable {
    pub names: [String; NUM_SCALES],
    pub values: [Codeword; 20],
    pub pad_codeword: Codeword,
}

static STANDARD_SCALES: LazyLock<ScaleTable> = LazyLock::new(|| {
    ScaleTable::parse(data::SCALES_CSV).expect("bundled scales.csv is well formed")
});

impl ScaleTable {
    /// WW*, pI, Levitt, TM and AASI scales as bundled.
    pub fn standard() -> &'static ScaleTable {
        &STANDARD_SCALES
    }

    /// Loads `scales.csv`, honoring `AMPGEN_DATA_DIR`.
    pub fn load() -> Result<ScaleTable> {
        ScaleTable::parse(&data::table_text("scales.csv")?)
    }

    /// Parses a residue table; PAD is placed at the residue mean, i.e. the
    /// origin after standardization.
    pub fn parse(text: &str) -> Result<ScaleTable> {
        let (names, values) = data::parse_residue_table::<NUM_SCALES>("scales.csv", text)?;
        Ok(ScaleTable::from_values(
            std::array::from_fn(|k| names[k].clone()),
            values,
        ))
    }

    pub fn from_values(names: [String; NUM_SCALES], values: [Codeword; 20]) -> ScaleTable {
        let pad_codeword = std::array::from_fn(|k| values.iter().map(|v| v[k]).sum::<f64>() / 20.0);
        ScaleTable {
            names,
            values,
            pad_codeword,
        }
    }
}

/// Raw scale vector for a residue or PAD.
pub fn lookup_raw(token: Token, table: &ScaleTable) -> Codeword {
    match token {
        Token::Residue(r) => table.values[r.index()],
        Token::Pad => table.pad_codeword,
    }
}

/// Per-dimension mean and population standard deviation over the 20 residues.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleNormalizer {
    pub mean: Codeword,
    pub std: Codeword,
}

impl ScaleNormalizer {
    pub fn fit(table: &ScaleTable) -> Result<ScaleNormalizer> {
        let mean: Codeword =
            std::array::from_fn(|k| table.values.iter().map(|v| v[k]).sum::<f64>() / 20.0);
        let std: Codeword = std::array::from_fn(|k| {
            let var = table
                .values
                .iter()
                .map(|v| (v[k] - mean[k]).powi(2))
                .sum::<f64>()
                / 20.0;
            var.sqrt()
        });
        if let Some(k) = std.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "scale '{}' is constant over the alphabet",
                table.names[k]
            )));
        }
        Ok(ScaleNormalizer { mean, std })
    }

    /// Leaves values unchanged; used for raw-space decoding.
    pub fn identity() -> ScaleNormalizer {
        ScaleNormalizer {
            mean: [0.0; NUM_SCALES],
            std: [1.0; NUM_SCALES],
        }
    }

    pub fn apply(&self, raw: &Codeword) -> Codeword {
        std::array::from_fn(|k| (raw[k] - self.mean[k]) / self.std[k])
    }
}

/// 5x100 embedding, stored row-major (`data[k * 100 + i]`).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
}

impl Default for EmbeddingMatrix {
    fn default() -> Self {
        Self::zeros()
    }
}

impl EmbeddingMatrix {
    pub const ROWS: usize = NUM_SCALES;
    pub const COLS: usize = EMBED_LEN;
    pub const LEN: usize = NUM_SCALES * EMBED_LEN;

    pub fn zeros() -> Self {
        EmbeddingMatrix {
            data: vec![0.0; Self::LEN],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::LEN {
            return Err(Error::ShapeMismatch {
                rows: 1,
                cols: data.len(),
                expected_rows: Self::ROWS,
                expected_cols: Self::COLS,
            });
        }
        Ok(EmbeddingMatrix { data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * Self::COLS + col]
    }

    pub fn column(&self, col: usize) -> Codeword {
        std::array::from_fn(|k| self.get(k, col))
    }

    pub fn set_column(&mut self, col: usize, value: &Codeword) {
        for (k, v) in value.iter().enumerate() {
            self.data[k * Self::COLS + col] = *v;
        }
    }

    /// CSV with a `scale,1,..,100` header, one row per scale, one column per position.
    pub fn write_csv<W: Write>(
        &self,
        names: &[String; NUM_SCALES],
        mut w: W,
    ) -> std::io::Result<()> {
        write!(w, "scale")?;
        for i in 1..=Self::COLS {
            write!(w, ",{i}")?;
        }
        writeln!(w)?;
        for (k, name) in names.iter().enumerate() {
            write!(w, "{name}")?;
            for i in 0..Self::COLS {
                // `{:?}` prints the shortest representation that parses back exactly.
                write!(w, ",{:?}", self.get(k, i))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<(Vec<String>, EmbeddingMatrix)> {
        let schema = |m: String| Error::Schema(format!("embedding csv: {m}"));
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| schema("empty input".into()))?
            .map_err(|e| schema(e.to_string()))?;
        let cols = header.split(',').count() - 1;
        if cols != Self::COLS {
            return Err(Error::ShapeMismatch {
                rows: 0,
                cols,
                expected_rows: Self::ROWS,
                expected_cols: Self::COLS,
            });
        }
        let mut names = Vec::new();
        let mut data = Vec::with_capacity(Self::LEN);
        for line in lines {
            let line = line.map_err(|e| schema(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            names.push(fields.next().unwrap_or_default().to_owned());
            let row: Vec<f64> = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| schema(format!("bad number '{f}'")))
                })
                .collect::<Result<_>>()?;
            if row.len() != Self::COLS {
                return Err(Error::ShapeMismatch {
                    rows: names.len(),
                    cols: row.len(),
                    expected_rows: Self::ROWS,
                    expected_cols: Self::COLS,
                });
            }
            data.extend(row);
        }
        if names.len() != Self::ROWS {
            return Err(Error::ShapeMismatch {
                rows: names.len(),
                cols: Self::COLS,
                expected_rows: Self::ROWS,
                expected_cols: Self::COLS,
            });
        }
        Ok((names, EmbeddingMatrix { data }))
    }

    /// Little-endian `u64 rows, u64 cols` followed by row-major `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(Self::ROWS as u64).to_le_bytes())?;
        w.write_all(&(Self::COLS as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
        let truncated = |_| Error::Schema("embedding binary: truncated input".into());
        let mut word = [0u8; 8];
        r.read_exact(&mut word).map_err(truncated)?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word).map_err(truncated)?;
        let cols = u64::from_le_bytes(word) as usize;
        if rows != Self::ROWS || cols != Self::COLS {
            return Err(Error::ShapeMismatch {
                rows,
                cols,
                expected_rows: Self::ROWS,
                expected_cols: Self::COLS,
            });
        }
        let mut data = Vec::with_capacity(Self::LEN);
        for _ in 0..Self::LEN {
            r.read_exact(&mut word).map_err(truncated)?;
            data.push(f64::from_le_bytes(word));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)
            .map_err(|e| Error::Schema(e.to_string()))?;
        if !rest.is_empty() {
            return Err(Error::Schema("embedding binary: trailing bytes".into()));
        }
        Ok(EmbeddingMatrix { data })
    }
}

/// The 21 codewords in decoding order (20 residues, then PAD) after normalization.
pub fn codebook(table: &ScaleTable, norm: &ScaleNormalizer) -> [(Token, Codeword); 21] {
    let mut tokens = Token::all();
    std::array::from_fn(|_| {
        let t = tokens.next().expect("21 tokens");
        (t, norm.apply(&lookup_raw(t, table)))
    })
}

fn distance(a: &Codeword, b: &Codeword) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Smallest pairwise L2 distance among the 21 normalized codewords.
pub fn min_codeword_separation(table: &ScaleTable, norm: &ScaleNormalizer) -> Result<f64> {
    let book = codebook(table, norm);
    let mut best = f64::INFINITY;
    for i in 0..book.len() {
        for j in i + 1..book.len() {
            let d = distance(&book[i].1, &book[j].1);
            if d == 0.0 {
                return Err(Error::DegenerateTable {
                    a: book[i].0.label(),
                    b: book[j].0.label(),
                });
            }
            best = best.min(d);
        }
    }
    Ok(best)
}

/// Nearest codeword; ties resolve to the earlier token (alphabet order, PAD last).
pub fn nearest_token(column: &Codeword, book: &[(Token, Codeword); 21]) -> Token {
    let mut best = (Token::Pad, f64::INFINITY);
    for (token, word) in book {
        let d = distance(column, word);
        if d < best.1 {
            best = (*token, d);
        }
    }
    best.0
}

pub fn encode(
    s: &PeptideSequence,
    table: &ScaleTable,
    norm: &ScaleNormalizer,
) -> Result<EmbeddingMatrix> {
    if s.len() > EMBED_LEN {
        return Err(Error::TooLong {
            length: s.len(),
            max: EMBED_LEN,
        });
    }
    let mut out = EmbeddingMatrix::zeros();
    let pad = norm.apply(&lookup_raw(Token::Pad, table));
    for i in 0..EMBED_LEN {
        let word = match s.residues().get(i) {
            Some(&r) => norm.apply(&lookup_raw(Token::Residue(r), table)),
            None => pad,
        };
        out.set_column(i, &word);
    }
    Ok(out)
}

pub fn decode(
    e: &EmbeddingMatrix,
    table: &ScaleTable,
    norm: &ScaleNormalizer,
) -> Result<PeptideSequence> {
    let book = codebook(table, norm);
    let mut residues = Vec::new();
    for i in 0..EMBED_LEN {
        match nearest_token(&e.column(i), &book) {
            Token::Residue(r) => residues.push(r),
            Token::Pad => break,
        }
    }
    if residues.is_empty() {
        return Err(Error::EmptyDecode);
    }
    PeptideSequence::new(residues)
}

/// Space in which codewords live and nearest-neighbor decoding happens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CodecSpace {
    #[default]
    Standardized,
    Raw,
}

/// A validated scale table with its normalizer.
#[derive(Clone, Debug)]
pub struct Codec {
    table: ScaleTable,
    norm: ScaleNormalizer,
    space: CodecSpace,
    separation: f64,
}

impl Codec {
    /// Standardized codec over the bundled scales.
    pub fn standard() -> Codec {
        Codec::new(
            ScaleTable::standard().clone(),
            CodecSpace::Standardized,
            DEFAULT_PAD_MARGIN,
        )
        .expect("bundled scales form a valid codec")
    }

    /// Checks injectivity and that every standardized residue codeword clears
    /// `pad_margin` from the origin.
    pub fn new(table: ScaleTable, space: CodecSpace, pad_margin: f64) -> Result<Codec> {
        let fitted = ScaleNormalizer::fit(&table)?;
        for r in Residue::ALL {
            let norm = fitted
                .apply(&lookup_raw(Token::Residue(r), &table))
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm <= pad_margin {
                return Err(Error::PadCollision {
                    residue: r.to_char(),
                    norm,
                    margin: pad_margin,
                });
            }
        }
        let norm = match space {
            CodecSpace::Standardized => fitted,
            CodecSpace::Raw => ScaleNormalizer::identity(),
        };
        let separation = min_codeword_separation(&table, &norm)?;
        Ok(Codec {
            table,
            norm,
            space,
            separation,
        })
    }

    pub fn table(&self) -> &ScaleTable {
        &self.table
    }

    pub fn normalizer(&self) -> &ScaleNormalizer {
        &self.norm
    }

    pub fn space(&self) -> CodecSpace {
        self.space
    }

    pub fn min_separation(&self) -> f64 {
        self.separation
    }

    pub fn encode(&self, s: &PeptideSequence) -> Result<EmbeddingMatrix> {
        encode(s, &self.table, &self.norm)
    }

    pub fn decode(&self, e: &EmbeddingMatrix) -> Result<PeptideSequence> {
        decode(e, &self.table, &self.norm)
    }
}
