use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pattern::{ChunkKind, ChunkPattern, Number};
use super::CorpusError;
use crate::util::sentence_case;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
        }
    }

    /// Coordinating conjunction used by the Coord BLM answer.
    pub fn conjunction(self) -> &'static str {
        match self {
            Language::En => "and",
            Language::Fr => "et",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "fr" => Ok(Language::Fr),
            other => Err(format!("unknown language {other:?} (expected en or fr)")),
        }
    }
}

pub const SEED_COLUMNS: [&str; 8] = [
    "Subj_sg", "Subj_pl", "P1_sg", "P1_pl", "P2_sg", "P2_pl", "V_sg", "V_pl",
];

/// One line of the seed file: every chunk in both numbers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRow {
    pub row_id: usize,
    pub language: Language,
    pub subj_sg: String,
    pub subj_pl: String,
    pub p1_sg: String,
    pub p1_pl: String,
    pub p2_sg: String,
    pub p2_pl: String,
    pub v_sg: String,
    pub v_pl: String,
}

impl SeedRow {
    pub fn cell(&self, kind: ChunkKind, n: Number) -> &str {
        match (kind, n) {
            (ChunkKind::Np, Number::Sg) => &self.subj_sg,
            (ChunkKind::Np, Number::Pl) => &self.subj_pl,
            (ChunkKind::Pp1, Number::Sg) => &self.p1_sg,
            (ChunkKind::Pp1, Number::Pl) => &self.p1_pl,
            (ChunkKind::Pp2, Number::Sg) => &self.p2_sg,
            (ChunkKind::Pp2, Number::Pl) => &self.p2_pl,
            (ChunkKind::Vp, Number::Sg) => &self.v_sg,
            (ChunkKind::Vp, Number::Pl) => &self.v_pl,
        }
    }

    /// Surface sentence for `pattern`.
    pub fn realize(&self, pattern: &ChunkPattern) -> String {
        let words: Vec<&str> = pattern
            .chunks()
            .iter()
            .map(|&(k, n)| self.cell(k, n))
            .collect();
        sentence_case(&words.join(" "))
    }

    /// Re-segment `text` against this row's cells; returns the pattern that
    /// produced it, if any.
    pub fn segment(&self, text: &str) -> Option<ChunkPattern> {
        let body = text.strip_suffix('.')?;
        let mut found = None;
        for kinds in [
            &[ChunkKind::Np, ChunkKind::Vp][..],
            &[ChunkKind::Np, ChunkKind::Pp1, ChunkKind::Vp],
            &[ChunkKind::Np, ChunkKind::Pp1, ChunkKind::Pp2, ChunkKind::Vp],
        ] {
            let mut chosen = Vec::new();
            if self.match_chunks(body, kinds, &mut chosen) {
                let p = ChunkPattern::new(chosen).ok()?;
                if found.replace(p).is_some() {
                    return None;
                }
            }
        }
        found
    }

    fn match_chunks(
        &self,
        rest: &str,
        kinds: &[ChunkKind],
        chosen: &mut Vec<(ChunkKind, Number)>,
    ) -> bool {
        let Some((&kind, tail)) = kinds.split_first() else {
            return rest.is_empty();
        };
        for n in [Number::Sg, Number::Pl] {
            let cell = self.cell(kind, n);
            let matched = if chosen.is_empty() {
                strip_prefix_first_upper(rest, cell)
            } else {
                rest.strip_prefix(' ').and_then(|r| r.strip_prefix(cell))
            };
            if let Some(r) = matched {
                chosen.push((kind, n));
                if self.match_chunks(r, tail, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
}

fn strip_prefix_first_upper<'a>(text: &'a str, cell: &str) -> Option<&'a str> {
    let cased = sentence_case(cell);
    let cased = cased.strip_suffix('.').unwrap_or(&cased);
    text.strip_prefix(cased)
}

/// Parse a tab-separated seed file with the eight `Subj_sg … V_pl` header columns.
pub fn parse_seed_file(path: &Path, language: Language) -> Result<Vec<SeedRow>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_seed_str(&text, language)
}

pub fn parse_seed_str(text: &str, language: Language) -> Result<Vec<SeedRow>, CorpusError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let header: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut cols = [0usize; 8];
    for (slot, name) in SEED_COLUMNS.iter().enumerate() {
        cols[slot] = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::Parse {
                line: 1,
                msg: format!("missing column {name}"),
            })?;
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        let mut vals: Vec<String> = Vec::with_capacity(8);
        for (slot, &c) in cols.iter().enumerate() {
            match cells.get(c) {
                Some(v) if !v.is_empty() => vals.push((*v).to_string()),
                Some(_) => {
                    return Err(CorpusError::Parse {
                        line: line_no,
                        msg: format!("empty cell {}", SEED_COLUMNS[slot]),
                    })
                }
                None => {
                    return Err(CorpusError::Parse {
                        line: line_no,
                        msg: format!("missing cell {}", SEED_COLUMNS[slot]),
                    })
                }
            }
        }
        for pair in 0..4 {
            if vals[2 * pair] == vals[2 * pair + 1] {
                return Err(CorpusError::Parse {
                    line: line_no,
                    msg: format!(
                        "{} and {} are identical",
                        SEED_COLUMNS[2 * pair],
                        SEED_COLUMNS[2 * pair + 1]
                    ),
                });
            }
        }
        let mut v = vals.into_iter();
        let mut next = || v.next().expect("eight cells");
        rows.push(SeedRow {
            row_id: rows.len(),
            language,
            subj_sg: next(),
            subj_pl: next(),
            p1_sg: next(),
            p1_pl: next(),
            p2_sg: next(),
            p2_pl: next(),
            v_sg: next(),
            v_pl: next(),
        });
    }
    Ok(rows)
}
