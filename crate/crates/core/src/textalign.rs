//! Rule-based label matching that seeds the alignment.
//!
//! Five cumulative methods, from exact string equality up to case folding,
//! punctuation removal, non-core term removal and ordinal canonicalisation.
//! A normalised label only produces a pair when it is unique among the
//! labelled entities of its geometry kind on both maps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AlignmentPair, AlignmentResult, GeometryKind, MapLayer, Provenance};

pub const DEFAULT_NONCORE_TERMS: [&str; 22] = [
    "street", "st", "avenue", "av", "ave", "road", "rd", "boulevard", "blvd", "place", "pl",
    "drive", "dr", "lane", "ln", "court", "ct", "alley", "way", "hall", "bldg", "building",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NormalizationOptions {
    caseless: bool,
    strip_punctuation: bool,
    strip_noncore: bool,
    expand_domain: bool,
}

impl NormalizationOptions {
    /// Fails unless strip_noncore ⇒ strip_punctuation ⇒ caseless.
    pub fn new(
        caseless: bool,
        strip_punctuation: bool,
        strip_noncore: bool,
        expand_domain: bool,
    ) -> Result<Self> {
        if strip_punctuation && !caseless {
            return Err(Error::InvalidParameter(
                "punctuation stripping requires caseless matching".into(),
            ));
        }
        if strip_noncore && !strip_punctuation {
            return Err(Error::InvalidParameter(
                "non-core term removal requires punctuation stripping".into(),
            ));
        }
        Ok(NormalizationOptions {
            caseless,
            strip_punctuation,
            strip_noncore,
            expand_domain,
        })
    }

    pub fn caseless(&self) -> bool {
        self.caseless
    }
    pub fn strip_punctuation(&self) -> bool {
        self.strip_punctuation
    }
    pub fn strip_noncore(&self) -> bool {
        self.strip_noncore
    }
    pub fn expand_domain(&self) -> bool {
        self.expand_domain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMethod {
    Str,
    StrCaseless,
    StrCaselessPunc,
    StrCaselessPuncNoncore,
    StrCaselessPuncNoncoreDomain,
}

impl TextMethod {
    pub const ALL: [TextMethod; 5] = [
        TextMethod::Str,
        TextMethod::StrCaseless,
        TextMethod::StrCaselessPunc,
        TextMethod::StrCaselessPuncNoncore,
        TextMethod::StrCaselessPuncNoncoreDomain,
    ];

    pub fn options(&self) -> NormalizationOptions {
        let level = *self as u8;
        NormalizationOptions {
            caseless: level >= 1,
            strip_punctuation: level >= 2,
            strip_noncore: level >= 3,
            expand_domain: level >= 4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TextMethod::Str => "str",
            TextMethod::StrCaseless => "str_caseless",
            TextMethod::StrCaselessPunc => "str_caseless_punc",
            TextMethod::StrCaselessPuncNoncore => "str_caseless_punc_noncore",
            TextMethod::StrCaselessPuncNoncoreDomain => "str_caseless_punc_noncore_domain",
        }
    }
}

impl fmt::Display for TextMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TextMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        TextMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown text method \"{s}\""))
    }
}

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}").expect("valid regex"))
}

const UNIT_ORDINALS: [&str; 19] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth", "seventeenth",
    "eighteenth", "nineteenth",
];
const TENS: [(&str, &str); 8] = [
    ("twenty", "twentieth"),
    ("thirty", "thirtieth"),
    ("forty", "fortieth"),
    ("fifty", "fiftieth"),
    ("sixty", "sixtieth"),
    ("seventy", "seventieth"),
    ("eighty", "eightieth"),
    ("ninety", "ninetieth"),
];

/// Word spellings of the ordinals 1..=100, mapped to their value. Compound
/// ordinals are listed joined ("twentyfirst"), hyphenated and as two tokens.
fn ordinal_words() -> &'static HashMap<String, u32> {
    static MAP: OnceLock<HashMap<String, u32>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut m = HashMap::new();
        for (i, w) in UNIT_ORDINALS.iter().enumerate() {
            m.insert(w.to_string(), i as u32 + 1);
        }
        for (t, (cardinal, ordinal)) in TENS.iter().enumerate() {
            let base = 20 + 10 * t as u32;
            m.insert(ordinal.to_string(), base);
            for (u, unit) in UNIT_ORDINALS[..9].iter().enumerate() {
                let v = base + u as u32 + 1;
                m.insert(format!("{cardinal}{unit}"), v);
                m.insert(format!("{cardinal}-{unit}"), v);
                m.insert(format!("{cardinal} {unit}"), v);
            }
        }
        m.insert("hundredth".into(), 100);
        m.insert("onehundredth".into(), 100);
        m.insert("one-hundredth".into(), 100);
        m.insert("one hundredth".into(), 100);
        m
    })
}

pub fn ordinal_digits(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Normaliser bound to a non-core term list.
#[derive(Debug, Clone)]
pub struct Normalizer {
    options: NormalizationOptions,
    noncore: BTreeSet<String>,
}

impl Normalizer {
    pub fn new(options: NormalizationOptions) -> Self {
        Normalizer {
            options,
            noncore: DEFAULT_NONCORE_TERMS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn for_method(method: TextMethod) -> Self {
        Self::new(method.options())
    }

    pub fn with_noncore_terms(mut self, terms: impl IntoIterator<Item = String>) -> Self {
        self.noncore = terms.into_iter().map(|t| t.to_lowercase()).collect();
        self
    }

    /// Reads one lowercase token per line; blank lines and `#` comments are skipped.
    pub fn with_noncore_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let terms = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string);
        Ok(self.with_noncore_terms(terms))
    }

    pub fn options(&self) -> NormalizationOptions {
        self.options
    }

    pub fn normalize(&self, label: &str) -> String {
        let opts = &self.options;
        let mut s = if opts.caseless {
            label.to_lowercase()
        } else {
            label.to_string()
        };
        if opts.strip_punctuation {
            s = punctuation().replace_all(&s, "").into_owned();
            s = s.split_whitespace().collect::<Vec<_>>().join(" ");
        }
        if !(opts.expand_domain || opts.strip_noncore) {
            return s;
        }
        let mut tokens: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        if opts.expand_domain {
            tokens = canonical_ordinals(tokens);
        }
        if opts.strip_noncore {
            tokens.retain(|t| !self.noncore.contains(&t.to_lowercase()));
        }
        tokens.join(" ")
    }
}

fn canonical_ordinals(tokens: Vec<String>) -> Vec<String> {
    let words = ordinal_words();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() {
            let joined = format!("{} {}", tokens[i], tokens[i + 1]).to_lowercase();
            if let Some(&n) = words.get(&joined) {
                out.push(ordinal_digits(n));
                i += 2;
                continue;
            }
        }
        match words.get(&tokens[i].to_lowercase()) {
            Some(&n) => out.push(ordinal_digits(n)),
            None => out.push(tokens[i].clone()),
        }
        i += 1;
    }
    out
}

/// Normalises with the default non-core term list.
pub fn normalize_label(label: &str, opts: NormalizationOptions) -> String {
    Normalizer::new(opts).normalize(label)
}

pub fn align_by_labels(a: &MapLayer, b: &MapLayer, method: TextMethod) -> AlignmentResult {
    align_by_labels_with(a, b, &Normalizer::for_method(method))
}

/// Labels that occur exactly once per geometry kind, keyed by (kind, label).
fn unique_labels<'a>(layer: &'a MapLayer, norm: &Normalizer) -> BTreeMap<(GeometryKind, String), &'a str> {
    let mut groups: BTreeMap<(GeometryKind, String), Vec<&str>> = BTreeMap::new();
    for e in layer.entities() {
        if let Some(name) = e.name() {
            let key = norm.normalize(name);
            if !key.is_empty() {
                groups.entry((e.kind(), key)).or_default().push(e.id());
            }
        }
    }
    groups
        .into_iter()
        .filter_map(|(k, ids)| (ids.len() == 1).then(|| (k, ids[0])))
        .collect()
}

pub fn align_by_labels_with(a: &MapLayer, b: &MapLayer, norm: &Normalizer) -> AlignmentResult {
    let la = unique_labels(a, norm);
    let lb = unique_labels(b, norm);
    let mut result = AlignmentResult::new();
    for (key, id_a) in &la {
        if let Some(id_b) = lb.get(key) {
            // unique on both sides, so this cannot collide
            result.try_insert(AlignmentPair::new(*id_a, *id_b, Provenance::Text));
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, Geometry, Point};
    use proptest::prelude::*;

    fn opts(c: bool, p: bool, n: bool, d: bool) -> NormalizationOptions {
        NormalizationOptions::new(c, p, n, d).unwrap()
    }

    #[test]
    fn label_examples() {
        assert_eq!(normalize_label("3rd Av.", opts(true, true, false, false)), "3rd av");
        assert_eq!(normalize_label("Delaware Street", opts(true, true, true, false)), "delaware");
        assert_eq!(normalize_label("Third Av", opts(true, true, false, true)), "3rd av");
        assert_eq!(
            normalize_label("Twenty-First St.", TextMethod::StrCaselessPuncNoncoreDomain.options()),
            "21st"
        );
        assert_eq!(normalize_label("one hundredth", opts(true, true, false, true)), "100th");
        assert_eq!(normalize_label("Main St", TextMethod::Str.options()), "Main St");
        // everything non-core
        assert_eq!(normalize_label("Street", opts(true, true, true, false)), "");
    }

    #[test]
    fn ordinal_suffixes() {
        let got: Vec<String> = [1, 2, 3, 4, 11, 12, 13, 21, 22, 23, 100].iter().map(|&n| ordinal_digits(n)).collect();
        assert_eq!(got, ["1st", "2nd", "3rd", "4th", "11th", "12th", "13th", "21st", "22nd", "23rd", "100th"]);
        assert_eq!(ordinal_words().len(), 19 + 8 + 8 * 9 * 3 + 4);
    }

    #[test]
    fn option_cumulativity_is_enforced() {
        assert!(NormalizationOptions::new(false, true, false, false).is_err());
        assert!(NormalizationOptions::new(true, false, true, false).is_err());
        for m in TextMethod::ALL {
            let o = m.options();
            assert!(NormalizationOptions::new(o.caseless, o.strip_punctuation, o.strip_noncore, o.expand_domain).is_ok());
            assert_eq!(m.as_str().parse::<TextMethod>().unwrap(), m);
        }
    }

    fn line_entity(id: &str, name: &str, y: f64) -> Entity {
        Entity::new(
            id,
            Some(name.into()),
            Geometry::polyline(vec![Point::new(0., y), Point::new(1., y)]).unwrap(),
        )
        .unwrap()
    }

    fn layer(id: &str, ents: Vec<Entity>) -> MapLayer {
        MapLayer::new(id, 1900, false, ents).unwrap()
    }

    #[test]
    fn punctuation_variant_pairs() {
        let a = layer("a", vec![line_entity("a1", "Delaware St.", 0.)]);
        let b = layer("b", vec![line_entity("b1", "delaware st", 0.)]);
        let r = align_by_labels(&a, &b, TextMethod::StrCaselessPunc);
        assert!(r.contains("a1", "b1"));
        assert_eq!(r.get("a1").unwrap().provenance, Provenance::Text);
        assert!(align_by_labels(&a, &b, TextMethod::StrCaseless).is_empty());
    }

    #[test]
    fn str_is_case_sensitive() {
        let a = layer("a", vec![line_entity("a1", "Main St", 0.)]);
        let b = layer("b", vec![line_entity("b1", "main st", 0.)]);
        assert!(align_by_labels(&a, &b, TextMethod::Str).is_empty());
        assert_eq!(align_by_labels(&a, &b, TextMethod::StrCaseless).len(), 1);
    }

    #[test]
    fn ambiguous_labels_are_not_paired() {
        let a = layer(
            "a",
            vec![line_entity("a1", "Delaware Street", 0.), line_entity("a2", "Delaware Av", 1.)],
        );
        let b = layer("b", vec![line_entity("b1", "Delaware", 0.)]);
        assert!(align_by_labels(&a, &b, TextMethod::StrCaselessPuncNoncore).is_empty());
    }

    #[test]
    fn kinds_must_match() {
        let a = layer("a", vec![line_entity("a1", "Park", 0.)]);
        let poly = Geometry::polygon(vec![Point::new(0., 0.), Point::new(1., 0.), Point::new(0., 1.)]).unwrap();
        let b = layer("b", vec![Entity::new("b1", Some("Park".into()), poly).unwrap()]);
        assert!(align_by_labels(&a, &b, TextMethod::Str).is_empty());
    }

    #[test]
    fn custom_noncore_terms() {
        let n = Normalizer::for_method(TextMethod::StrCaselessPuncNoncore).with_noncore_terms(["creek".to_string()]);
        assert_eq!(n.normalize("Cazenovia Creek"), "cazenovia");
        assert_eq!(n.normalize("Main Street"), "main street");
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(label in "[A-Za-z0-9 .,'-]{1,30}", level in 0usize..5) {
            let n = Normalizer::for_method(TextMethod::ALL[level]);
            let once = n.normalize(&label);
            prop_assert_eq!(n.normalize(&once), once);
        }

        #[test]
        fn alignment_is_symmetric(names in proptest::collection::vec("(Main|Elm|Oak|First|1st|Park)( St| Av\\.| Street)?", 1..8),
                                  others in proptest::collection::vec("(main|elm|oak|first|1st|park)( st| av| street)?", 1..8),
                                  level in 0usize..5) {
            let a = layer("a", names.iter().enumerate().map(|(i, n)| line_entity(&format!("a{i}"), n, i as f64)).collect());
            let b = layer("b", others.iter().enumerate().map(|(i, n)| line_entity(&format!("b{i}"), n, i as f64)).collect());
            let m = TextMethod::ALL[level];
            let ab = align_by_labels(&a, &b, m);
            let ba = align_by_labels(&b, &a, m);
            prop_assert_eq!(ab.id_pairs(), ba.swapped().id_pairs());
            let norm = Normalizer::for_method(m);
            for p in ab.pairs() {
                let la = norm.normalize(a.get(&p.id_a).unwrap().name().unwrap());
                let lb = norm.normalize(b.get(&p.id_b).unwrap().name().unwrap());
                prop_assert_eq!(la, lb);
            }
        }
    }
}
