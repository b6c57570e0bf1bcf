use crate::corpus::{ChunkKind, Number, SeedRow};
use crate::util::sentence_case;

use super::Lexicon;

use Number::{Pl, Sg};

/// Abstract agreement sentence: subject, optional attractors, verb.
/// `coord` turns the second attractor into a coordinated noun.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AgrSpec {
    pub subj: Number,
    pub p1: Option<Number>,
    pub p2: Option<Number>,
    pub coord: bool,
    pub verb: Number,
}

const fn spec(subj: Number, p1: Option<Number>, p2: Option<Number>, verb: Number) -> AgrSpec {
    AgrSpec {
        subj,
        p1,
        p2,
        coord: false,
        verb,
    }
}

pub const CONTEXT: [AgrSpec; 7] = [
    spec(Sg, Some(Sg), None, Sg),
    spec(Pl, Some(Sg), None, Pl),
    spec(Sg, Some(Pl), None, Sg),
    spec(Pl, Some(Pl), None, Pl),
    spec(Sg, Some(Sg), Some(Sg), Sg),
    spec(Pl, Some(Sg), Some(Sg), Pl),
    spec(Sg, Some(Pl), Some(Sg), Sg),
];

pub const ANSWERS: [(&str, AgrSpec); 8] = [
    (
        "Coord",
        AgrSpec {
            subj: Sg,
            p1: Some(Sg),
            p2: Some(Sg),
            coord: true,
            verb: Sg,
        },
    ),
    ("Correct", spec(Pl, Some(Pl), Some(Sg), Pl)),
    ("WNA", spec(Sg, Some(Sg), None, Sg)),
    ("AE_V", spec(Pl, Some(Pl), Some(Pl), Sg)),
    ("AE_N1", spec(Pl, Some(Sg), Some(Pl), Sg)),
    ("AE_N2", spec(Pl, Some(Pl), Some(Sg), Sg)),
    ("WN1", spec(Pl, Some(Sg), Some(Sg), Pl)),
    ("WN2", spec(Pl, Some(Pl), Some(Pl), Pl)),
];

/// Lexical slots: subject, first attractor, second attractor, verb.
pub const SLOTS: [&str; 4] = ["subject", "pp1", "pp2", "verb"];

impl AgrSpec {
    pub fn is_grammatical(&self) -> bool {
        self.subj == self.verb
    }

    pub fn realized_slots(&self) -> [bool; 4] {
        [true, self.p1.is_some(), self.p2.is_some(), true]
    }

    /// e.g. `np-p pp1-p pp2-s vp-p`; coordination shows as `coord-s`.
    pub fn structure(&self) -> String {
        let n = Number::as_str;
        let mut parts = vec![format!("np-{}", n(self.subj))];
        if let Some(p) = self.p1 {
            parts.push(format!("pp1-{}", n(p)));
        }
        if let Some(p) = self.p2 {
            let kind = if self.coord { "coord" } else { "pp2" };
            parts.push(format!("{kind}-{}", n(p)));
        }
        parts.push(format!("vp-{}", n(self.verb)));
        parts.join(" ")
    }

    pub fn realize(&self, seeds: &[SeedRow], lex: &Lexicon) -> String {
        let row = |slot: usize| &seeds[lex.0[slot]];
        let mut words = vec![row(0).cell(ChunkKind::Np, self.subj).to_string()];
        if let Some(p) = self.p1 {
            words.push(row(1).cell(ChunkKind::Pp1, p).to_string());
        }
        if let Some(p) = self.p2 {
            let cell = row(2).cell(ChunkKind::Pp2, p);
            words.push(if self.coord {
                coordinate(cell, row(2).language.conjunction())
            } else {
                cell.to_string()
            });
        }
        words.push(row(3).cell(ChunkKind::Vp, self.verb).to_string());
        sentence_case(&words.join(" "))
    }

    /// Re-segment `text` against the cells selected by `lex`.
    pub fn parse(text: &str, seeds: &[SeedRow], lex: &Lexicon) -> Option<AgrSpec> {
        let mut hits = Vec::new();
        for subj in [Sg, Pl] {
            for verb in [Sg, Pl] {
                for p1 in [None, Some(Sg), Some(Pl)] {
                    for p2 in [None, Some(Sg), Some(Pl)] {
                        for coord in [false, true] {
                            if (p2.is_some() && p1.is_none()) || (coord && p2.is_none()) {
                                continue;
                            }
                            let s = AgrSpec {
                                subj,
                                p1,
                                p2,
                                coord,
                                verb,
                            };
                            if s.realize(seeds, lex) == text {
                                hits.push(s);
                            }
                        }
                    }
                }
            }
        }
        (hits.len() == 1).then(|| hits[0])
    }
}

/// Replace the leading preposition of a PP with a conjunction.
fn coordinate(pp: &str, conj: &str) -> String {
    match pp.split_once(' ') {
        Some((_, rest)) => format!("{conj} {rest}"),
        None => format!("{conj} {pp}"),
    }
}

/// Two rows differ lexically in `slot` when the singular cells differ.
pub fn slot_differs(seeds: &[SeedRow], slot: usize, a: usize, b: usize) -> bool {
    let kind = [ChunkKind::Np, ChunkKind::Pp1, ChunkKind::Pp2, ChunkKind::Vp][slot];
    seeds[a].cell(kind, Sg) != seeds[b].cell(kind, Sg)
}
