use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rustc_hash::FxHashMap;

use super::SemanticsError;

/// Class names, the scored subset and the ignore label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: BTreeMap<u16, String>,
    eval: Vec<u16>,
    ignore: Option<u16>,
}

impl LabelSet {
    /// Label set scoring `eval` in that order.
    pub fn new(names: impl IntoIterator<Item = (u16, String)>, eval: Vec<u16>, ignore: Option<u16>) -> Result<Self, SemanticsError> {
        let set = Self {
            names: names.into_iter().collect(),
            eval,
            ignore,
        };
        set.validate()?;
        Ok(set)
    }

    /// Unnamed classes `ids`, all scored.
    pub fn from_ids(ids: &[u16], ignore: Option<u16>) -> Result<Self, SemanticsError> {
        Self::new(ids.iter().map(|&i| (i, format!("class{i}"))), ids.to_vec(), ignore)
    }

    fn validate(&self) -> Result<(), SemanticsError> {
        if let Some(ig) = self.ignore {
            if self.eval.contains(&ig) {
                return Err(SemanticsError::InvalidLabelSet(format!("ignore label {ig} is in the evaluation subset")));
            }
        }
        let mut seen = self.eval.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(SemanticsError::InvalidLabelSet("duplicate id in evaluation subset".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SemanticsError> {
        let text = std::fs::read_to_string(path).map_err(|e| SemanticsError::Io(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    pub fn eval_ids(&self) -> &[u16] {
        &self.eval
    }

    pub fn ignore(&self) -> Option<u16> {
        self.ignore
    }

    pub fn name(&self, id: u16) -> String {
        self.names.get(&id).cloned().unwrap_or_else(|| format!("class{id}"))
    }

    pub fn names(&self) -> impl Iterator<Item = (u16, &str)> {
        self.names.iter().map(|(&i, n)| (i, n.as_str()))
    }

    /// The label set seen after applying `remap` to every id.
    pub fn remapped(&self, remap: &ClassRemap) -> Result<Self, SemanticsError> {
        let mut eval = Vec::new();
        for &id in &self.eval {
            let to = remap.apply(id);
            if !eval.contains(&to) {
                eval.push(to);
            }
        }
        let mut names = BTreeMap::new();
        for (&id, name) in &self.names {
            let to = remap.apply(id);
            if to == id || !names.contains_key(&to) {
                names.insert(to, self.names.get(&to).unwrap_or(name).clone());
            }
        }
        Self::new(names, eval, self.ignore.map(|i| remap.apply(i)))
    }
}

impl FromStr for LabelSet {
    type Err = SemanticsError;

    /// Lines `id<TAB>name`, plus `ignore <id>` and `eval <id,id,...>`.
    /// Without an `eval` line every named id except the ignore label is scored.
    fn from_str(text: &str) -> Result<Self, SemanticsError> {
        let mut names = BTreeMap::new();
        let mut eval = None;
        let mut ignore = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| SemanticsError::Parse {
                line: line_no,
                message: msg.to_string(),
            };
            if let Some(rest) = line.strip_prefix("ignore ") {
                ignore = Some(parse_id(rest.trim()).ok_or_else(|| bad("invalid ignore id"))?);
            } else if let Some(rest) = line.strip_prefix("eval ") {
                let ids: Option<Vec<u16>> = rest.split(',').map(|s| parse_id(s.trim())).collect();
                eval = Some(ids.ok_or_else(|| bad("invalid id in eval list"))?);
            } else {
                let (id, name) = raw
                    .split_once('\t')
                    .ok_or_else(|| bad("expected `id<TAB>name`, `ignore <id>` or `eval <ids>`"))?;
                let id = parse_id(id.trim()).ok_or_else(|| bad("invalid label id"))?;
                names.insert(id, name.trim().to_string());
            }
        }
        let eval = eval.unwrap_or_else(|| names.keys().copied().filter(|&i| Some(i) != ignore).collect());
        Self::new(names, eval, ignore)
    }
}

fn parse_id(s: &str) -> Option<u16> {
    s.parse().ok()
}

/// Label-to-label mapping; ids not listed map to themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassRemap(FxHashMap<u16, u16>);

impl ClassRemap {
    pub fn new(pairs: impl IntoIterator<Item = (u16, u16)>) -> Self {
        Self(pairs.into_iter().collect())
    }

    pub fn load(path: &Path) -> Result<Self, SemanticsError> {
        let text = std::fs::read_to_string(path).map_err(|e| SemanticsError::Io(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    #[inline]
    pub fn apply(&self, label: u16) -> u16 {
        self.0.get(&label).copied().unwrap_or(label)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|(a, b)| a == b)
    }
}

impl FromStr for ClassRemap {
    type Err = SemanticsError;

    /// Lines `from<TAB>to`.
    fn from_str(text: &str) -> Result<Self, SemanticsError> {
        let mut map = FxHashMap::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let pair = line
                .split_once(|c: char| c.is_whitespace())
                .and_then(|(a, b)| Some((parse_id(a.trim())?, parse_id(b.trim())?)));
            let (from, to) = pair.ok_or_else(|| SemanticsError::Parse {
                line: n + 1,
                message: "expected `from<TAB>to`".into(),
            })?;
            map.insert(from, to);
        }
        Ok(Self(map))
    }
}
