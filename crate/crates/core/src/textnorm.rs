//! Rule-based deobfuscation of forum text: quote stripping, dictionary
//! canonicalization, symbol removal, and leetspeak reversal.
//!
//! Transformations never invent words: a token either maps to a lexicon
//! entry or passes through unchanged, which also makes the whole pipeline
//! idempotent. The lexicon, substitution table, canonical map, and skip
//! list are data files, not code.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

/// Word list plus the subset considered profanity (profanity entries are
/// preferred when several substitutions resolve).
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashSet<String>,
    profanity: HashSet<String>,
}

impl Lexicon {
    pub fn from_lines(words: &str, profanity: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        for w in words.lines().map(str::trim) {
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            if w.chars().any(char::is_whitespace) || w.to_lowercase() != w {
                return Err(Error::config(format!(
                    "lexicon entries must be lowercase single tokens: {w:?}"
                )));
            }
            lex.words.insert(w.to_string());
        }
        for w in profanity.lines().map(str::trim) {
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            lex.profanity.insert(w.to_string());
            lex.words.insert(w.to_string());
        }
        Ok(lex)
    }

    pub fn load(words: &Path, profanity: &Path) -> Result<Self> {
        Lexicon::from_lines(
            &std::fs::read_to_string(words)?,
            &std::fs::read_to_string(profanity)?,
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn is_profane(&self, word: &str) -> bool {
        self.profanity.contains(word)
    }
}

/// Obfuscation character to candidate letters, e.g. `1 -> i, l`.
#[derive(Debug, Clone)]
pub struct SubstitutionTable {
    map: BTreeMap<char, Vec<char>>,
}

impl Default for SubstitutionTable {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        for (from, to) in [
            ('4', "a"),
            ('3', "e"),
            ('0', "o"),
            ('1', "il"),
            ('$', "s"),
            ('@', "a"),
            ('5', "s"),
            ('7', "t"),
        ] {
            map.insert(from, to.chars().collect());
        }
        SubstitutionTable { map }
    }
}

impl SubstitutionTable {
    /// Parse `from,to` CSV lines; repeated `from` rows accumulate
    /// candidates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<char, Vec<char>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line == "from,to" {
                continue;
            }
            let Some((from, to)) = line.split_once(',') else {
                return Err(Error::parse(lineno + 1, format!("expected from,to: {line:?}")));
            };
            let (from, to) = (from.trim(), to.trim());
            let mut from_chars = from.chars();
            let (Some(f), None) = (from_chars.next(), from_chars.next()) else {
                return Err(Error::parse(lineno + 1, "from must be one character".to_string()));
            };
            let mut to_chars = to.chars();
            let (Some(t), None) = (to_chars.next(), to_chars.next()) else {
                return Err(Error::parse(lineno + 1, "to must be one character".to_string()));
            };
            if !t.is_ascii_lowercase() {
                return Err(Error::parse(
                    lineno + 1,
                    format!("replacement must be a lowercase letter: {t:?}"),
                ));
            }
            map.entry(f).or_default().push(t);
        }
        Ok(SubstitutionTable { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        SubstitutionTable::parse(&std::fs::read_to_string(path)?)
    }

    fn candidates(&self, c: char) -> Option<&[char]> {
        self.map.get(&c).map(|v| v.as_slice())
    }
}

/// High-frequency obfuscated token to canonical form, matched
/// case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct CanonMap {
    map: HashMap<String, String>,
}

impl CanonMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line == "from,to" {
                continue;
            }
            let Some((from, to)) = line.split_once(',') else {
                return Err(Error::parse(lineno + 1, format!("expected from,to: {line:?}")));
            };
            let (from, to) = (from.trim(), to.trim());
            if to.chars().any(char::is_whitespace) || to.to_lowercase() != to {
                return Err(Error::parse(
                    lineno + 1,
                    format!("canonical forms are lowercase single tokens: {to:?}"),
                ));
            }
            map.insert(from.to_lowercase(), to.to_string());
        }
        Ok(CanonMap { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        CanonMap::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.map.get(&token.to_lowercase()).map(String::as_str)
    }
}

/// Tokens deliberately left alone (context-dependent obfuscations).
#[derive(Debug, Clone, Default)]
pub struct SkipList {
    tokens: HashSet<String>,
}

impl SkipList {
    pub fn from_lines(text: &str) -> Self {
        SkipList {
            tokens: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_lowercase())
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(SkipList::from_lines(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(&token.to_lowercase())
    }
}

/// Remove quoted blocks: `<blockquote>...</blockquote>` spans and lines
/// whose first non-space character is `>`. The author's own text is kept
/// verbatim.
pub fn strip_quotes(text: &str) -> String {
    let mut no_blocks = String::with_capacity(text.len());
    let lower = text.to_lowercase();
    let mut pos = 0;
    while let Some(open) = lower[pos..].find("<blockquote") {
        let open = pos + open;
        no_blocks.push_str(&text[pos..open]);
        match lower[open..].find("</blockquote>") {
            Some(close) => pos = open + close + "</blockquote>".len(),
            None => {
                pos = text.len();
                break;
            }
        }
    }
    no_blocks.push_str(&text[pos..]);

    let kept: Vec<&str> = no_blocks
        .lines()
        .filter(|line| !line.trim_start().starts_with('>'))
        .collect();
    kept.join("\n").trim().to_string()
}

/// Remove symbols from a word iff the residue is a known word.
pub fn desymbol(word: &str, lexicon: &Lexicon) -> String {
    let residue: String = word.chars().filter(|c| c.is_alphanumeric()).collect();
    if residue.len() == word.len() {
        return word.to_string();
    }
    let lowered = residue.to_lowercase();
    if lexicon.contains(&lowered) {
        lowered
    } else {
        word.to_string()
    }
}

/// Substitutable characters allowed before the search is abandoned.
const MAX_LEET_POSITIONS: usize = 8;

/// Reverse leetspeak: try substitution assignments and keep the one whose
/// result is a known word, preferring profanity, then fewer substitutions,
/// then lexicographic order.
pub fn deleet(word: &str, table: &SubstitutionTable, lexicon: &Lexicon) -> String {
    let chars: Vec<char> = word.chars().collect();
    let positions: Vec<usize> = (0..chars.len())
        .filter(|&i| table.candidates(chars[i]).is_some())
        .collect();
    if positions.is_empty() || positions.len() > MAX_LEET_POSITIONS {
        return word.to_string();
    }

    // (not-profane, substitutions, candidate): minimal wins.
    let mut best: Option<(bool, usize, String)> = None;
    let mut assignment: Vec<Option<char>> = vec![None; positions.len()];
    search(
        &chars,
        &positions,
        table,
        lexicon,
        0,
        &mut assignment,
        &mut best,
    );
    best.map(|(_, _, w)| w).unwrap_or_else(|| word.to_string())
}

fn search(
    chars: &[char],
    positions: &[usize],
    table: &SubstitutionTable,
    lexicon: &Lexicon,
    depth: usize,
    assignment: &mut Vec<Option<char>>,
    best: &mut Option<(bool, usize, String)>,
) {
    if depth == positions.len() {
        let mut candidate: Vec<char> = chars.to_vec();
        let mut substitutions = 0;
        for (slot, &pos) in assignment.iter().zip(positions) {
            if let Some(c) = slot {
                candidate[pos] = *c;
                substitutions += 1;
            }
        }
        if substitutions == 0 {
            return;
        }
        let lowered: String = candidate.iter().collect::<String>().to_lowercase();
        if lexicon.contains(&lowered) {
            let key = (!lexicon.is_profane(&lowered), substitutions, lowered);
            if best.as_ref().is_none_or(|b| key < *b) {
                *best = Some(key);
            }
        }
        return;
    }
    // Keeping the original character counts as zero substitutions here.
    assignment[depth] = None;
    search(chars, positions, table, lexicon, depth + 1, assignment, best);
    for &c in table.candidates(chars[positions[depth]]).unwrap() {
        assignment[depth] = Some(c);
        search(chars, positions, table, lexicon, depth + 1, assignment, best);
    }
    assignment[depth] = None;
}

/// Punctuation detached from token edges before transformation. Characters
/// that appear in obfuscations (`$`, `@`, `*`, `/`, digits) are never
/// detached.
fn is_edge_punctuation(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '"' | '\'' | '(' | ')')
}

/// The full pipeline: strip quotes, then per token apply the canonical
/// map, symbol removal, and leetspeak reversal. Whitespace collapses to
/// single spaces. Idempotent: normalizing twice equals normalizing once.
pub fn normalize(
    text: &str,
    lexicon: &Lexicon,
    table: &SubstitutionTable,
    canon: &CanonMap,
    skip: &SkipList,
) -> String {
    let stripped = strip_quotes(text);
    let mut out: Vec<String> = Vec::new();
    for token in stripped.split_whitespace() {
        let start = token.find(|c| !is_edge_punctuation(c)).unwrap_or(token.len());
        let end = token[start..]
            .rfind(|c| !is_edge_punctuation(c))
            .map(|i| start + i + 1)
            .unwrap_or(token.len());
        let (lead, core, tail) = (&token[..start], &token[start..end], &token[end..]);
        let replaced = transform_token(core, lexicon, table, canon, skip);
        out.push(format!("{lead}{replaced}{tail}"));
    }
    out.join(" ")
}

fn transform_token(
    core: &str,
    lexicon: &Lexicon,
    table: &SubstitutionTable,
    canon: &CanonMap,
    skip: &SkipList,
) -> String {
    if core.is_empty() || skip.contains(core) {
        return core.to_string();
    }
    if let Some(canonical) = canon.get(core) {
        return canonical.to_string();
    }
    let desymboled = desymbol(core, lexicon);
    deleet(&desymboled, table, lexicon)
}
