use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChunkKind {
    Np,
    Pp1,
    Pp2,
    Vp,
}

impl ChunkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChunkKind::Np => "np",
            ChunkKind::Pp1 => "pp1",
            ChunkKind::Pp2 => "pp2",
            ChunkKind::Vp => "vp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Number {
    #[serde(rename = "s")]
    Sg,
    #[serde(rename = "p")]
    Pl,
}

impl Number {
    pub fn as_str(self) -> &'static str {
        match self {
            Number::Sg => "s",
            Number::Pl => "p",
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Number::Sg => Number::Pl,
            Number::Pl => Number::Sg,
        }
    }
}

impl FromStr for Number {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "s" | "sg" => Ok(Number::Sg),
            "p" | "pl" => Ok(Number::Pl),
            other => Err(format!("unknown grammatical number {other:?}")),
        }
    }
}

/// Ordered chunks with grammatical number, e.g. `np-s pp1-p vp-s`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChunkPattern {
    chunks: Vec<(ChunkKind, Number)>,
}

impl ChunkPattern {
    /// Validates ordering, optionality and subject-verb agreement.
    pub fn new(chunks: Vec<(ChunkKind, Number)>) -> Result<Self, String> {
        use ChunkKind::*;
        let kinds: Vec<ChunkKind> = chunks.iter().map(|c| c.0).collect();
        let ok_shape = matches!(
            kinds.as_slice(),
            [Np, Vp] | [Np, Pp1, Vp] | [Np, Pp1, Pp2, Vp]
        );
        if !ok_shape {
            return Err(format!("chunk sequence {kinds:?} is not np (pp1 (pp2)) vp"));
        }
        if chunks[0].1 != chunks[chunks.len() - 1].1 {
            return Err("np and vp disagree in number".into());
        }
        Ok(Self { chunks })
    }

    pub fn chunks(&self) -> &[(ChunkKind, Number)] {
        &self.chunks
    }

    pub fn subject_number(&self) -> Number {
        self.chunks[0].1
    }

    pub fn number_of(&self, kind: ChunkKind) -> Option<Number> {
        self.chunks.iter().find(|c| c.0 == kind).map(|c| c.1)
    }

    /// Position in [`enumerate_patterns`].
    pub fn index(&self) -> usize {
        enumerate_patterns()
            .iter()
            .position(|p| p == self)
            .expect("validated pattern is enumerated")
    }
}

/// All 14 grammatical patterns: by length, then attractor numbers, then subject number.
pub fn enumerate_patterns() -> Vec<ChunkPattern> {
    use ChunkKind::*;
    use Number::*;
    let mut out = Vec::with_capacity(14);
    for n in [Sg, Pl] {
        out.push(ChunkPattern {
            chunks: vec![(Np, n), (Vp, n)],
        });
    }
    for p1 in [Sg, Pl] {
        for n in [Sg, Pl] {
            out.push(ChunkPattern {
                chunks: vec![(Np, n), (Pp1, p1), (Vp, n)],
            });
        }
    }
    for p2 in [Sg, Pl] {
        for p1 in [Sg, Pl] {
            for n in [Sg, Pl] {
                out.push(ChunkPattern {
                    chunks: vec![(Np, n), (Pp1, p1), (Pp2, p2), (Vp, n)],
                });
            }
        }
    }
    out
}

impl fmt::Display for ChunkPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, n)) in self.chunks.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}-{}", k.as_str(), n.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for ChunkPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chunks = s
            .split_whitespace()
            .map(|tok| {
                let (k, n) = tok
                    .split_once('-')
                    .ok_or_else(|| format!("bad chunk {tok:?}"))?;
                let kind = match k {
                    "np" => ChunkKind::Np,
                    "pp1" => ChunkKind::Pp1,
                    "pp2" => ChunkKind::Pp2,
                    "vp" => ChunkKind::Vp,
                    _ => return Err(format!("bad chunk kind {k:?}")),
                };
                Ok((kind, n.parse()?))
            })
            .collect::<Result<Vec<_>, String>>()?;
        ChunkPattern::new(chunks)
    }
}

impl Serialize for ChunkPattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChunkPattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
