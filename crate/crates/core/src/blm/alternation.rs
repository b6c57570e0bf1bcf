use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Number;
use crate::util::sentence_case;

use super::{BlmError, Lexicon};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Agent,
    Theme,
    Loc,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Agent => "Agent",
            Role::Theme => "Theme",
            Role::Loc => "Loc",
        })
    }
}

/// One chunk of an alternation sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AltChunk {
    Np(Role),
    Verb,
    /// Passive verb agreeing with the sentence's first NP.
    VerbPass,
    /// The role's own preposition and NP.
    Pp(Role),
    /// Preposition of the first role in front of the NP of the second.
    PpMixed(Role, Role),
    /// Wrong preposition in front of the role's NP.
    PpWrong(Role),
    /// Prepositional phrase unrelated to the verb's arguments.
    Distractor,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AltSpec(pub Vec<AltChunk>);

/// One row of the alternation seed lexicon.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AltSeedRow {
    pub row_id: usize,
    pub agent: String,
    pub agent_num: Number,
    pub verb: String,
    pub pass_sg: String,
    pub pass_pl: String,
    pub theme: String,
    pub theme_num: Number,
    pub theme_prep: String,
    pub loc: String,
    pub loc_num: Number,
    pub loc_prep: String,
    pub agent_prep: String,
    pub wrong_prep: String,
    pub distractor_pp: String,
}

pub const ALT_COLUMNS: [&str; 14] = [
    "Agent",
    "Agent_num",
    "Verb",
    "Pass_sg",
    "Pass_pl",
    "Theme",
    "Theme_num",
    "Theme_prep",
    "Loc",
    "Loc_num",
    "Loc_prep",
    "Agent_prep",
    "Wrong_prep",
    "Distractor_pp",
];

/// Lexical slots: agent, verb (with its passive forms, wrong preposition and
/// distractor), theme, location.
pub const SLOTS: [&str; 4] = ["agent", "verb", "theme", "loc"];

fn role_slot(r: Role) -> usize {
    match r {
        Role::Agent => 0,
        Role::Theme => 2,
        Role::Loc => 3,
    }
}

impl AltSeedRow {
    fn np(&self, r: Role) -> &str {
        match r {
            Role::Agent => &self.agent,
            Role::Theme => &self.theme,
            Role::Loc => &self.loc,
        }
    }

    fn number(&self, r: Role) -> Number {
        match r {
            Role::Agent => self.agent_num,
            Role::Theme => self.theme_num,
            Role::Loc => self.loc_num,
        }
    }

    fn prep(&self, r: Role) -> &str {
        match r {
            Role::Agent => &self.agent_prep,
            Role::Theme => &self.theme_prep,
            Role::Loc => &self.loc_prep,
        }
    }
}

pub fn parse_alternation_str(text: &str) -> Result<Vec<AltSeedRow>, BlmError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let header: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut cols = [0usize; 14];
    for (slot, name) in ALT_COLUMNS.iter().enumerate() {
        cols[slot] = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BlmError::Parse {
                line: 1,
                msg: format!("missing column {name}"),
            })?;
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        let mut v = Vec::with_capacity(14);
        for (slot, &c) in cols.iter().enumerate() {
            match cells.get(c) {
                Some(x) if !x.is_empty() => v.push((*x).to_string()),
                _ => {
                    return Err(BlmError::Parse {
                        line: line_no,
                        msg: format!("empty cell {}", ALT_COLUMNS[slot]),
                    })
                }
            }
        }
        let num = |k: usize| -> Result<Number, BlmError> {
            v[k].parse()
                .map_err(|msg| BlmError::Parse { line: line_no, msg })
        };
        rows.push(AltSeedRow {
            row_id: rows.len(),
            agent_num: num(1)?,
            theme_num: num(6)?,
            loc_num: num(9)?,
            agent: v[0].clone(),
            verb: v[2].clone(),
            pass_sg: v[3].clone(),
            pass_pl: v[4].clone(),
            theme: v[5].clone(),
            theme_prep: v[7].clone(),
            loc: v[8].clone(),
            loc_prep: v[10].clone(),
            agent_prep: v[11].clone(),
            wrong_prep: v[12].clone(),
            distractor_pp: v[13].clone(),
        });
    }
    Ok(rows)
}

pub fn parse_alternation_file(path: &Path) -> Result<Vec<AltSeedRow>, BlmError> {
    let text = std::fs::read_to_string(path).map_err(|source| BlmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_alternation_str(&text)
}

/// Context rows and labelled answers. `obj` is the role that becomes the
/// direct object in the correct answer; `obl` the one that becomes oblique.
pub fn template(obj: Role, obl: Role) -> ([AltSpec; 7], Vec<(&'static str, AltSpec)>) {
    use AltChunk::*;
    use Role::Agent;
    let context = [
        AltSpec(vec![Np(Agent), Verb, Np(obl), Pp(obj)]),
        AltSpec(vec![Np(obl), VerbPass, Pp(Agent)]),
        AltSpec(vec![Np(obl), VerbPass, Pp(obj), Pp(Agent)]),
        AltSpec(vec![Np(obl), VerbPass, Pp(obj)]),
        AltSpec(vec![Np(obj), VerbPass, Pp(Agent)]),
        AltSpec(vec![Np(obj), VerbPass, Pp(obl), Pp(Agent)]),
        AltSpec(vec![Np(obj), VerbPass, Pp(obl)]),
    ];
    let answers = vec![
        ("Correct", AltSpec(vec![Np(Agent), Verb, Np(obj), Pp(obl)])),
        (
            "AgentAct",
            AltSpec(vec![Np(Agent), VerbPass, Np(obj), Pp(obl)]),
        ),
        ("Alt1", AltSpec(vec![Np(Agent), Verb, Np(obj), Np(obl)])),
        ("Alt2", AltSpec(vec![Np(Agent), Verb, Pp(obj), Pp(obl)])),
        ("NoEmb", AltSpec(vec![Np(Agent), Verb, Np(obj), Distractor])),
        (
            "LexPrep",
            AltSpec(vec![Np(Agent), Verb, Np(obj), PpWrong(obl)]),
        ),
        ("SSM1", AltSpec(vec![Np(obj), Verb, Np(Agent), Pp(obl)])),
        ("SSM2", AltSpec(vec![Np(obl), Verb, Np(Agent), Pp(obj)])),
        (
            "AASSM",
            AltSpec(vec![Np(obj), Verb, Np(obl), PpMixed(obj, Agent)]),
        ),
    ];
    (context, answers)
}

impl AltSpec {
    /// e.g. `NP-Agent Verb NP-Loc PP-Theme`.
    pub fn structure(&self) -> String {
        self.0
            .iter()
            .map(|c| match c {
                AltChunk::Np(r) => format!("NP-{r}"),
                AltChunk::Verb => "Verb".into(),
                AltChunk::VerbPass => "VerbPass".into(),
                AltChunk::Pp(r) => format!("PP-{r}"),
                AltChunk::PpMixed(p, r) => format!("PP[{p}]-{r}"),
                AltChunk::PpWrong(r) => format!("PP*-{r}"),
                AltChunk::Distractor => "PP-none".into(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn realized_slots(&self) -> [bool; 4] {
        let mut s = [false, true, false, false];
        for c in &self.0 {
            match *c {
                AltChunk::Np(r) | AltChunk::Pp(r) | AltChunk::PpWrong(r) => s[role_slot(r)] = true,
                AltChunk::PpMixed(p, r) => {
                    s[role_slot(p)] = true;
                    s[role_slot(r)] = true;
                }
                _ => {}
            }
        }
        s
    }

    pub fn realize(&self, seeds: &[AltSeedRow], lex: &Lexicon) -> String {
        let row = |slot: usize| &seeds[lex.0[slot]];
        let role_row = |r: Role| row(role_slot(r));
        let subject_number = match self.0.first() {
            Some(AltChunk::Np(r)) => role_row(*r).number(*r),
            _ => Number::Sg,
        };
        let words: Vec<String> = self
            .0
            .iter()
            .map(|c| match *c {
                AltChunk::Np(r) => role_row(r).np(r).to_string(),
                AltChunk::Verb => row(1).verb.clone(),
                AltChunk::VerbPass => match subject_number {
                    Number::Sg => row(1).pass_sg.clone(),
                    Number::Pl => row(1).pass_pl.clone(),
                },
                AltChunk::Pp(r) => format!("{} {}", role_row(r).prep(r), role_row(r).np(r)),
                AltChunk::PpMixed(p, r) => format!("{} {}", role_row(p).prep(p), role_row(r).np(r)),
                AltChunk::PpWrong(r) => format!("{} {}", row(1).wrong_prep, role_row(r).np(r)),
                AltChunk::Distractor => row(1).distractor_pp.clone(),
            })
            .collect();
        sentence_case(&words.join(" "))
    }
}

pub fn slot_differs(seeds: &[AltSeedRow], slot: usize, a: usize, b: usize) -> bool {
    let (x, y) = (&seeds[a], &seeds[b]);
    match slot {
        0 => x.agent != y.agent,
        1 => x.verb != y.verb,
        2 => x.theme != y.theme,
        _ => x.loc != y.loc,
    }
}
