//! Pinyin syllables, per-character reading tables and fuzzy phonetic classes.
//!
//! Matching is toneless throughout: a syllable is compared by its initial and
//! final only. Fuzzy classes collapse commonly confused initials (z/zh, c/ch,
//! s/sh, ...) and finals (an/ang, en/eng, in/ing, ...) onto one representative.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The 23 initials, two-letter ones first so prefix matching is longest-first.
pub const INITIALS: [&str; 23] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r",
    "z", "c", "s", "y", "w",
];

/// Every legal toneless syllable. `v` stands for `ü`.
const SYLLABLES: &str = "\
a ai an ang ao e ei en eng er o ou \
ba bai ban bang bao bei ben beng bi bian biao bie bin bing bo bu \
pa pai pan pang pao pei pen peng pi pian piao pie pin ping po pou pu \
ma mai man mang mao me mei men meng mi mian miao mie min ming miu mo mou mu \
fa fan fang fei fen feng fo fou fu \
da dai dan dang dao de dei den deng di dia dian diao die ding diu dong dou du duan dui dun duo \
ta tai tan tang tao te tei teng ti tian tiao tie ting tong tou tu tuan tui tun tuo \
na nai nan nang nao ne nei nen neng ni nian niang niao nie nin ning niu nong nou nu nuan nun nuo nv nve \
la lai lan lang lao le lei leng li lia lian liang liao lie lin ling liu lo long lou lu luan lun luo lv lve \
ga gai gan gang gao ge gei gen geng gong gou gu gua guai guan guang gui gun guo \
ka kai kan kang kao ke kei ken keng kong kou ku kua kuai kuan kuang kui kun kuo \
ha hai han hang hao he hei hen heng hong hou hu hua huai huan huang hui hun huo \
ji jia jian jiang jiao jie jin jing jiong jiu ju juan jue jun \
qi qia qian qiang qiao qie qin qing qiong qiu qu quan que qun \
xi xia xian xiang xiao xie xin xing xiong xiu xu xuan xue xun \
zha zhai zhan zhang zhao zhe zhei zhen zheng zhi zhong zhou zhu zhua zhuai zhuan zhuang zhui zhun zhuo \
cha chai chan chang chao che chen cheng chi chong chou chu chua chuai chuan chuang chui chun chuo \
sha shai shan shang shao she shei shen sheng shi shou shu shua shuai shuan shuang shui shun shuo \
ran rang rao re ren reng ri rong rou ru rua ruan rui run ruo \
za zai zan zang zao ze zei zen zeng zi zong zou zu zuan zui zun zuo \
ca cai can cang cao ce cen ceng ci cong cou cu cuan cui cun cuo \
sa sai san sang sao se sen seng si song sou su suan sui sun suo \
ya yan yang yao ye yi yin ying yo yong you yu yuan yue yun \
wa wai wan wang wei wen weng wo wu";

/// Default fuzzy classes, one per line.
pub const DEFAULT_FUZZY_CLASSES: &str = include_str!("../data/fuzzy_default.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PinyinError {
    #[error("invalid pinyin syllable {0:?}")]
    InvalidSyllable(String),
    #[error("line {line}: malformed pinyin table entry")]
    MalformedLine { line: usize },
    #[error("line {line}: {source}")]
    BadReading {
        line: usize,
        #[source]
        source: Box<PinyinError>,
    },
    #[error("unknown fuzzy class member {0:?}")]
    UnknownMember(String),
    #[error("fuzzy class member {0:?} mixes initials and finals")]
    MixedClass(String),
    #[error("{0:?} appears in more than one fuzzy class")]
    NotAPartition(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn syllable_set() -> &'static BTreeSet<&'static str> {
    static SET: std::sync::OnceLock<BTreeSet<&'static str>> = std::sync::OnceLock::new();
    SET.get_or_init(|| SYLLABLES.split_whitespace().collect())
}

/// All valid toneless syllables in sorted order.
pub fn all_syllables() -> impl Iterator<Item = &'static str> {
    syllable_set().iter().copied()
}

/// All finals that occur in a valid syllable.
pub fn all_finals() -> &'static BTreeSet<String> {
    static SET: std::sync::OnceLock<BTreeSet<String>> = std::sync::OnceLock::new();
    SET.get_or_init(|| {
        all_syllables()
            .map(|s| split_initial(s).1.to_string())
            .collect()
    })
}

fn split_initial(s: &str) -> (&str, &str) {
    for ini in INITIALS {
        if s.len() > ini.len() && s.starts_with(ini) {
            return s.split_at(ini.len());
        }
    }
    ("", s)
}

/// One reading of one character.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PinyinSyllable {
    pub initial: String,
    #[serde(rename = "final")]
    pub final_: String,
    /// 1..=4, 0 for neutral or unspecified.
    pub tone: u8,
}

impl PinyinSyllable {
    /// Parses `jia`, `jia1`, `lv4` or `lü`. A trailing `5` is read as neutral tone.
    pub fn parse(s: &str) -> Result<Self, PinyinError> {
        let invalid = || PinyinError::InvalidSyllable(s.to_string());
        let normalized = s.replace('ü', "v");
        let (body, tone) = match normalized.as_bytes().last() {
            Some(d @ b'0'..=b'5') => {
                let t = d - b'0';
                (&normalized[..normalized.len() - 1], if t == 5 { 0 } else { t })
            }
            Some(_) => (normalized.as_str(), 0),
            None => return Err(invalid()),
        };
        if !syllable_set().contains(body) {
            return Err(invalid());
        }
        let (initial, final_) = split_initial(body);
        Ok(Self {
            initial: initial.to_string(),
            final_: final_.to_string(),
            tone,
        })
    }

    /// The toneless spelling, `initial + final`.
    pub fn toneless(&self) -> String {
        format!("{}{}", self.initial, self.final_)
    }

    /// Same segments, ignoring tone.
    pub fn same_segments(&self, other: &Self) -> bool {
        self.initial == other.initial && self.final_ == other.final_
    }
}

impl fmt::Display for PinyinSyllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.initial, self.final_)?;
        if self.tone > 0 {
            write!(f, "{}", self.tone)?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PinyinSyllable {
    type Err = PinyinError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Convenience wrapper matching the free-function naming used elsewhere.
pub fn parse_syllable(s: &str) -> Result<PinyinSyllable, PinyinError> {
    PinyinSyllable::parse(s)
}

/// Tone-free, fuzzy-normalized syllable; the unit of phonetic indexing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FuzzyKey {
    pub initial: String,
    #[serde(rename = "final")]
    pub final_: String,
}

impl fmt::Display for FuzzyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.initial, self.final_)
    }
}

/// A partition of initials and of finals into confusion classes.
///
/// Members not named by any class are singletons. Each member maps to the
/// lexicographically smallest member of its class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyClassTable {
    initial_classes: Vec<Vec<String>>,
    final_classes: Vec<Vec<String>>,
    #[serde(skip)]
    initial_rep: HashMap<String, String>,
    #[serde(skip)]
    final_rep: HashMap<String, String>,
}

impl FuzzyClassTable {
    /// Builds a table from explicit classes. Every member must be a known
    /// initial or final, classes must not mix the two, and no member may be
    /// listed twice.
    pub fn from_classes<I, C, S>(classes: I) -> Result<Self, PinyinError>
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let finals = all_finals();
        let mut seen = BTreeSet::new();
        let mut initial_classes: Vec<BTreeSet<String>> = Vec::new();
        let mut final_classes: Vec<BTreeSet<String>> = Vec::new();
        for class in classes {
            let members: Vec<String> = class.into_iter().map(|s| s.as_ref().to_string()).collect();
            if members.is_empty() {
                continue;
            }
            let mut kind = None;
            let mut set = BTreeSet::new();
            for m in members {
                let is_initial = INITIALS.contains(&m.as_str());
                let is_final = finals.contains(&m);
                let this = match (is_initial, is_final) {
                    (true, _) => true,
                    (false, true) => false,
                    _ => return Err(PinyinError::UnknownMember(m)),
                };
                if *kind.get_or_insert(this) != this {
                    return Err(PinyinError::MixedClass(m));
                }
                if !seen.insert(m.clone()) {
                    return Err(PinyinError::NotAPartition(m));
                }
                set.insert(m);
            }
            if kind == Some(true) {
                initial_classes.push(set);
            } else {
                final_classes.push(set);
            }
        }
        let complete = |classes: Vec<BTreeSet<String>>, universe: Vec<String>| {
            let mut out: Vec<Vec<String>> = classes
                .into_iter()
                .map(|c| c.into_iter().collect())
                .collect();
            let named: BTreeSet<&String> = out.iter().flatten().collect();
            let rest: Vec<Vec<String>> = universe
                .iter()
                .filter(|u| !named.contains(u))
                .map(|u| vec![u.clone()])
                .collect();
            out.extend(rest);
            out.sort();
            out
        };
        let mut initials: Vec<String> = INITIALS.iter().map(|s| s.to_string()).collect();
        initials.push(String::new());
        let initial_classes = complete(initial_classes, initials);
        let final_classes = complete(final_classes, finals.iter().cloned().collect());
        let mut table = Self {
            initial_classes,
            final_classes,
            initial_rep: HashMap::new(),
            final_rep: HashMap::new(),
        };
        table.index();
        Ok(table)
    }

    fn index(&mut self) {
        fn reps(classes: &[Vec<String>]) -> HashMap<String, String> {
            let mut out = HashMap::new();
            for c in classes {
                let rep = c.iter().min().expect("classes are nonempty").clone();
                for m in c {
                    out.insert(m.clone(), rep.clone());
                }
            }
            out
        }
        self.initial_rep = reps(&self.initial_classes);
        self.final_rep = reps(&self.final_classes);
    }

    /// Parses the one-class-per-line format (`z zh`). `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, PinyinError> {
        let classes = text.lines().map(|l| {
            l.split('#')
                .next()
                .unwrap_or("")
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>()
        });
        Self::from_classes(classes)
    }

    pub fn load(path: &Path) -> Result<Self, PinyinError> {
        let text = fs::read_to_string(path).map_err(|e| PinyinError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Only singleton classes: fuzzy keys equal toneless syllables.
    pub fn identity() -> Self {
        Self::from_classes(Vec::<Vec<String>>::new()).expect("empty class list is a partition")
    }

    /// Restores the lookup maps after deserialization.
    pub(crate) fn reindexed(mut self) -> Self {
        self.index();
        self
    }

    pub fn initial_classes(&self) -> &[Vec<String>] {
        &self.initial_classes
    }

    pub fn final_classes(&self) -> &[Vec<String>] {
        &self.final_classes
    }

    /// Renders the non-singleton classes in the file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in self.initial_classes.iter().chain(&self.final_classes) {
            if c.len() > 1 {
                out.push_str(&c.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn key(&self, s: &PinyinSyllable) -> FuzzyKey {
        let lookup = |map: &HashMap<String, String>, m: &String| map.get(m).unwrap_or(m).clone();
        FuzzyKey {
            initial: lookup(&self.initial_rep, &s.initial),
            final_: lookup(&self.final_rep, &s.final_),
        }
    }

    pub fn equivalent(&self, a: &PinyinSyllable, b: &PinyinSyllable) -> bool {
        self.key(a) == self.key(b)
    }
}

impl Default for FuzzyClassTable {
    fn default() -> Self {
        Self::parse(DEFAULT_FUZZY_CLASSES).expect("bundled fuzzy table is valid")
    }
}

pub fn fuzzy_key(s: &PinyinSyllable, table: &FuzzyClassTable) -> FuzzyKey {
    table.key(s)
}

pub fn syllables_equivalent(a: &PinyinSyllable, b: &PinyinSyllable, table: &FuzzyClassTable) -> bool {
    table.equivalent(a, b)
}

/// Character readings. Polyphones keep every distinct toneless reading in
/// file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinyinTable {
    readings: BTreeMap<char, Vec<PinyinSyllable>>,
}

impl PinyinTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a reading. Returns false when an equal toneless reading was
    /// already present for the character.
    pub fn insert(&mut self, ch: char, reading: PinyinSyllable) -> bool {
        let list = self.readings.entry(ch).or_default();
        if list.iter().any(|r| r.same_segments(&reading)) {
            return false;
        }
        list.push(reading);
        true
    }

    /// Parses `字\tzi4` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, PinyinError> {
        let mut table = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let l = raw.trim_end_matches('\r');
            if l.trim().is_empty() || l.starts_with('#') {
                continue;
            }
            let mut fields = l.split('\t');
            let (Some(ch), Some(py), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(PinyinError::MalformedLine { line });
            };
            let mut chars = ch.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(PinyinError::MalformedLine { line });
            };
            let reading = PinyinSyllable::parse(py.trim()).map_err(|e| PinyinError::BadReading {
                line,
                source: Box::new(e),
            })?;
            table.insert(c, reading);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, PinyinError> {
        let text = fs::read_to_string(path).map_err(|e| PinyinError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (c, rs) in &self.readings {
            for r in rs {
                out.push_str(&format!("{c}\t{r}\n"));
            }
        }
        out
    }

    /// Readings of `c`, empty when the character is not in the table.
    pub fn readings(&self, c: char) -> &[PinyinSyllable] {
        self.readings.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, c: char) -> bool {
        self.readings.contains_key(&c)
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.readings.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}
