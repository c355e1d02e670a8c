//! Synthetic scholar/publication corpus and the read-only endpoint semantics
//! of the default registry.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::client::ApiError;
use crate::util::{canonical_json, sha256_hex};

pub const DEFAULT_SCHOLARS: usize = 1000;
pub const DEFAULT_PUBS: usize = 3000;
pub const YEAR_RANGE: (i64, i64) = (1990, 2023);

const FIRST_NAMES: &[&str] = &[
    "Alice", "Bruno", "Chen", "Dana", "Elif", "Farah", "Goran", "Hana", "Ivan", "Jun", "Kofi", "Lena", "Mateo",
    "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tara", "Umar", "Vera", "Wei", "Xenia", "Yusuf", "Zoe", "Amir",
    "Bea", "Carlos", "Daria", "Emil", "Fiona", "Gita", "Hugo", "Ines", "Jonas", "Kira", "Luis", "Mina", "Nils", "Olga",
    "Pavel", "Rui", "Sara", "Tomas", "Una", "Viktor", "Ying", "Zain", "Maya",
];

const LAST_NAMES: &[&str] = &[
    "Zhang",
    "Okafor",
    "Lindqvist",
    "Moreau",
    "Tanaka",
    "Haddad",
    "Novak",
    "Silva",
    "Kowalski",
    "Ivanova",
    "Mensah",
    "Rossi",
    "Nguyen",
    "Schmidt",
    "Kapoor",
    "Duarte",
    "Larsen",
    "Petrov",
    "Yamamoto",
    "Costa",
    "Hoffmann",
    "Abebe",
    "Fischer",
    "Gupta",
    "Jensen",
    "Kim",
    "Lopez",
    "Martins",
    "Nakamura",
    "Olsen",
    "Park",
    "Quispe",
    "Reyes",
    "Sato",
    "Torres",
    "Ueda",
    "Vargas",
    "Weber",
    "Xu",
    "Yilmaz",
    "Bauer",
    "Chandra",
    "Diaz",
    "Eriksen",
    "Ferrari",
    "Garcia",
    "Horvat",
    "Ito",
    "Jovanovic",
    "Li",
];

const ORGANIZATIONS: &[&str] = &[
    "Tsinghua University",
    "Stanford University",
    "ETH Zurich",
    "University of Toronto",
    "MIT",
    "Carnegie Mellon University",
    "Peking University",
    "University of Oxford",
    "University of Cambridge",
    "EPFL",
    "National University of Singapore",
    "University of Tokyo",
    "KAIST",
    "Technion",
    "University of Edinburgh",
    "TU Munich",
    "University of Washington",
    "UC Berkeley",
    "Cornell University",
    "University of Amsterdam",
    "Max Planck Institute for Informatics",
    "INRIA",
    "Seoul National University",
    "University of Melbourne",
    "McGill University",
    "Zhejiang University",
    "Fudan University",
    "University of Michigan",
    "Georgia Tech",
    "University of Illinois",
    "Sorbonne University",
    "KU Leuven",
    "Aalto University",
    "University of Copenhagen",
    "Sapienza University of Rome",
    "University of Sao Paulo",
    "IIT Bombay",
    "Hebrew University",
    "University of Cape Town",
    "Monash University",
];

const INTERESTS: &[&str] = &[
    "machine learning",
    "data mining",
    "information retrieval",
    "natural language processing",
    "computer vision",
    "knowledge graphs",
    "graph neural networks",
    "reinforcement learning",
    "databases",
    "distributed systems",
    "computer networks",
    "cryptography",
    "program synthesis",
    "formal verification",
    "human computer interaction",
    "robotics",
    "speech recognition",
    "recommender systems",
    "social network analysis",
    "bioinformatics",
    "quantum computing",
    "computer architecture",
    "operating systems",
    "compilers",
    "software engineering",
    "computational geometry",
    "algorithmic game theory",
    "optimization",
    "causal inference",
    "federated learning",
    "question answering",
    "semantic web",
    "edge computing",
    "computer graphics",
    "information theory",
    "signal processing",
    "embedded systems",
    "scientific computing",
    "privacy",
    "fairness in machine learning",
];

const DEGREES: &[&str] = &["Ph.D.", "M.S.", "B.S."];

// Title words. No task word is a proper prefix of another and no adjective is a
// proper suffix of another, so no title is a substring of a different title.
const TITLE_ADJ: &[&str] = &[
    "Scalable",
    "Robust",
    "Efficient",
    "Adaptive",
    "Sparse",
    "Hierarchical",
    "Probabilistic",
    "Contrastive",
    "Incremental",
    "Federated",
    "Interpretable",
    "Lightweight",
    "Differentiable",
    "Streaming",
    "Unified",
    "Causal",
    "Bayesian",
    "Modular",
    "Neural",
    "Symbolic",
];
const TITLE_METHOD: &[&str] = &[
    "Embeddings",
    "Transformers",
    "Sketches",
    "Indexes",
    "Kernels",
    "Ensembles",
    "Agents",
    "Solvers",
    "Heuristics",
    "Encoders",
    "Programs",
    "Samplers",
    "Networks",
    "Retrievers",
    "Planners",
    "Protocols",
    "Estimators",
    "Filters",
    "Schedulers",
    "Automata",
];
const TITLE_TOPIC: &[&str] = &[
    "Citation",
    "Entity",
    "Query",
    "Graph",
    "Scholar",
    "Document",
    "Molecule",
    "Traffic",
    "Image",
    "Dialogue",
    "Code",
    "Sensor",
    "Genome",
    "Market",
    "Speech",
    "Video",
    "Table",
    "Network",
    "Protein",
    "Knowledge",
];
const TITLE_TASK: &[&str] = &[
    "Ranking",
    "Linking",
    "Parsing",
    "Clustering",
    "Forecasting",
    "Matching",
    "Completion",
    "Alignment",
    "Summarization",
    "Segmentation",
    "Retrieval",
    "Tagging",
    "Compression",
    "Detection",
    "Reasoning",
    "Generation",
    "Verification",
    "Routing",
    "Labeling",
    "Embedding",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scholar {
    pub person_id: String,
    pub name: String,
    pub organization: String,
    pub interest: Vec<String>,
    pub bio: String,
    pub education_experience: String,
    pub pub_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub pub_id: String,
    pub title: String,
    pub year: i64,
    pub num_citation: i64,
    pub author_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed: u64,
    pub snapshot_id: String,
    pub scholars: BTreeMap<String, Scholar>,
    pub publications: BTreeMap<String, Publication>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("snapshot id mismatch: file says {stored}, content hashes to {computed}")]
    SnapshotMismatch { stored: String, computed: String },
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot parse: {0}")]
    Parse(#[from] serde_json::Error),
}

pub fn person_id(i: usize) -> String {
    format!("P{i:07}")
}

pub fn pub_id(i: usize) -> String {
    format!("W{i:07}")
}

/// Maximum number of distinct names the generator can produce.
pub fn name_capacity() -> usize {
    FIRST_NAMES.len() * LAST_NAMES.len() * 27
}

fn names(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut pool: Vec<String> = Vec::with_capacity(FIRST_NAMES.len() * LAST_NAMES.len());
    for f in FIRST_NAMES {
        for l in LAST_NAMES {
            pool.push(format!("{f} {l}"));
        }
    }
    pool.shuffle(rng);
    let mut out: Vec<String> = pool.iter().take(n).cloned().collect();
    // Past the plain product, add middle initials.
    let mut initial = b'A';
    while out.len() < n {
        for base in &pool {
            if out.len() == n {
                break;
            }
            let (f, l) = base.split_once(' ').expect("two-part name");
            out.push(format!("{f} {}. {l}", initial as char));
        }
        initial += 1;
    }
    out
}

/// Heavy-tailed draw (Pareto with shape 1.2), capped.
fn heavy_tail(rng: &mut ChaCha8Rng) -> i64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v = 3.0 * (u.powf(-1.0 / 1.2) - 1.0);
    v.min(50_000.0) as i64
}

fn title(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} for {} {}",
        TITLE_ADJ.choose(rng).expect("nonempty"),
        TITLE_METHOD.choose(rng).expect("nonempty"),
        TITLE_TOPIC.choose(rng).expect("nonempty"),
        TITLE_TASK.choose(rng).expect("nonempty"),
    )
}

fn title_capacity() -> usize {
    TITLE_ADJ.len() * TITLE_METHOD.len() * TITLE_TOPIC.len() * TITLE_TASK.len()
}

/// Seed-deterministic corpus. Publication `i < n_scholars` has scholar `i` as
/// first author, so every scholar authors at least one publication.
pub fn generate_corpus(seed: u64, n_scholars: usize, n_pubs: usize) -> Result<Corpus, CorpusError> {
    if n_scholars == 0 {
        return Err(CorpusError::InvalidCounts("n_scholars must be at least 1".into()));
    }
    if n_pubs < n_scholars {
        return Err(CorpusError::InvalidCounts(format!(
            "n_pubs ({n_pubs}) must be at least n_scholars ({n_scholars})"
        )));
    }
    if n_scholars > name_capacity() {
        return Err(CorpusError::InvalidCounts(format!("at most {} scholars supported", name_capacity())));
    }
    if n_pubs > title_capacity() {
        return Err(CorpusError::InvalidCounts(format!("at most {} publications supported", title_capacity())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = names(&mut rng, n_scholars);

    let mut scholars: Vec<Scholar> = Vec::with_capacity(n_scholars);
    for (i, name) in names.into_iter().enumerate() {
        let organization = ORGANIZATIONS.choose(&mut rng).expect("nonempty").to_string();
        let k = rng.random_range(1..=3);
        let interest: Vec<String> = INTERESTS.choose_multiple(&mut rng, k).map(|s| s.to_string()).collect();
        let degree = DEGREES.choose(&mut rng).expect("nonempty");
        let school = ORGANIZATIONS.choose(&mut rng).expect("nonempty");
        let grad_year = rng.random_range(1975..=2020);
        scholars.push(Scholar {
            person_id: person_id(i),
            bio: format!("{name} is a researcher at {organization} focusing on {}.", interest[0]),
            education_experience: format!("{degree}, {school}, {grad_year}"),
            name,
            organization,
            interest,
            pub_ids: Vec::new(),
        });
    }

    let mut seen_titles = BTreeSet::new();
    let mut raw: Vec<(i64, usize)> = Vec::with_capacity(n_pubs);
    let mut pubs: Vec<Publication> = Vec::with_capacity(n_pubs);
    for i in 0..n_pubs {
        let first = if i < n_scholars { i } else { rng.random_range(0..n_scholars) };
        let mut authors = vec![first];
        let extra = rng.random_range(0..=3usize).min(n_scholars - 1);
        while authors.len() < extra + 1 {
            // Half of the co-authors come from the first author's organization.
            let same_org = rng.random_bool(0.5);
            let candidate = if same_org {
                let org = &scholars[first].organization;
                let start = rng.random_range(0..n_scholars);
                (0..n_scholars)
                    .map(|o| (start + o) % n_scholars)
                    .find(|&j| j != first && !authors.contains(&j) && &scholars[j].organization == org)
                    .unwrap_or_else(|| rng.random_range(0..n_scholars))
            } else {
                rng.random_range(0..n_scholars)
            };
            if !authors.contains(&candidate) {
                authors.push(candidate);
            }
        }
        let mut t = title(&mut rng);
        while !seen_titles.insert(t.clone()) {
            t = title(&mut rng);
        }
        raw.push((heavy_tail(&mut rng), i));
        pubs.push(Publication {
            pub_id: pub_id(i),
            title: t,
            year: rng.random_range(YEAR_RANGE.0..=YEAR_RANGE.1),
            num_citation: 0,
            author_ids: authors.iter().map(|&a| person_id(a)).collect(),
        });
        for &a in &authors {
            scholars[a].pub_ids.push(pub_id(i));
        }
    }
    // Make citation counts globally distinct while keeping the drawn order.
    raw.sort();
    let mut prev = -1i64;
    for (v, i) in raw {
        let v = v.max(prev + 1);
        pubs[i].num_citation = v;
        prev = v;
    }

    Ok(Corpus::from_parts(seed, scholars, pubs))
}

impl Corpus {
    pub fn from_parts(seed: u64, scholars: Vec<Scholar>, pubs: Vec<Publication>) -> Corpus {
        let mut c = Corpus {
            seed,
            snapshot_id: String::new(),
            scholars: scholars.into_iter().map(|s| (s.person_id.clone(), s)).collect(),
            publications: pubs.into_iter().map(|p| (p.pub_id.clone(), p)).collect(),
        };
        c.snapshot_id = c.content_digest();
        c
    }

    fn content_digest(&self) -> String {
        let body = json!({"seed": self.seed, "scholars": self.scholars, "publications": self.publications});
        sha256_hex(canonical_json(&body))[..16].to_string()
    }

    pub fn to_json(&self) -> String {
        canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Corpus, CorpusError> {
        let c: Corpus = serde_json::from_str(text)?;
        let computed = c.content_digest();
        if computed != c.snapshot_id {
            return Err(CorpusError::SnapshotMismatch { stored: c.snapshot_id, computed });
        }
        c.check_integrity()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Corpus, CorpusError> {
        Corpus::from_json(&std::fs::read_to_string(path)?)
    }

    /// Referential integrity in both directions.
    pub fn check_integrity(&self) -> Result<(), CorpusError> {
        for s in self.scholars.values() {
            for p in &s.pub_ids {
                let publication = self
                    .publications
                    .get(p)
                    .ok_or_else(|| CorpusError::Integrity(format!("{} lists unknown pub {p}", s.person_id)))?;
                if !publication.author_ids.contains(&s.person_id) {
                    return Err(CorpusError::Integrity(format!("{p} does not list author {}", s.person_id)));
                }
            }
        }
        for p in self.publications.values() {
            if p.author_ids.is_empty() {
                return Err(CorpusError::Integrity(format!("{} has no authors", p.pub_id)));
            }
            for a in &p.author_ids {
                let s = self
                    .scholars
                    .get(a)
                    .ok_or_else(|| CorpusError::Integrity(format!("{} lists unknown author {a}", p.pub_id)))?;
                if !s.pub_ids.contains(&p.pub_id) {
                    return Err(CorpusError::Integrity(format!("{a} does not list pub {}", p.pub_id)));
                }
            }
        }
        Ok(())
    }

    fn scholar(&self, id: &str) -> Result<&Scholar, ApiError> {
        self.scholars.get(id).ok_or_else(|| ApiError::NotFound(format!("no scholar with person_id {id}")))
    }

    fn publication(&self, id: &str) -> Result<&Publication, ApiError> {
        self.publications.get(id).ok_or_else(|| ApiError::NotFound(format!("no publication with pub_id {id}")))
    }
}

fn person_row(s: &Scholar) -> Value {
    json!({"person_id": s.person_id, "name": s.name, "organization": s.organization})
}

fn param<'a>(params: &'a BTreeMap<String, Value>, name: &str) -> Result<Option<&'a str>, ApiError> {
    match params.get(name) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(ApiError::BadRequest(format!("parameter `{name}` must be a string, got {other}"))),
    }
}

fn required<'a>(params: &'a BTreeMap<String, Value>, name: &str) -> Result<&'a str, ApiError> {
    param(params, name)?.ok_or_else(|| ApiError::BadRequest(format!("missing required parameter `{name}`")))
}

fn only(params: &BTreeMap<String, Value>, allowed: &[&str]) -> Result<(), ApiError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ApiError::BadRequest(format!("unknown parameter `{k}`"))),
        None => Ok(()),
    }
}

/// Answers one API request. Never mutates the corpus.
pub fn query_endpoint(corpus: &Corpus, api: &str, params: &BTreeMap<String, Value>) -> Result<Value, ApiError> {
    match api {
        "searchPerson" => {
            only(params, &["name", "organization", "interest"])?;
            let name = param(params, "name")?.map(str::to_lowercase);
            let org = param(params, "organization")?.map(str::to_lowercase);
            let interest = param(params, "interest")?.map(str::to_lowercase);
            if name.is_none() && org.is_none() && interest.is_none() {
                return Err(ApiError::BadRequest(
                    "searchPerson needs at least one of name, organization, interest".into(),
                ));
            }
            let hits: Vec<Value> = corpus
                .scholars
                .values()
                .filter(|s| name.as_ref().is_none_or(|n| s.name.to_lowercase() == *n))
                .filter(|s| org.as_ref().is_none_or(|o| s.organization.to_lowercase() == *o))
                .filter(|s| interest.as_ref().is_none_or(|i| s.interest.iter().any(|x| x.to_lowercase() == *i)))
                .map(person_row)
                .collect();
            Ok(Value::Array(hits))
        }
        "getPersonBasicInfo" => {
            only(params, &["person_id"])?;
            let s = corpus.scholar(required(params, "person_id")?)?;
            Ok(json!({
                "name": s.name,
                "organization": s.organization,
                "bio": s.bio,
                "education_experience": s.education_experience,
                "interest": s.interest,
            }))
        }
        "getPersonPubs" => {
            only(params, &["person_id"])?;
            let s = corpus.scholar(required(params, "person_id")?)?;
            let mut ids: Vec<&String> = s.pub_ids.iter().collect();
            ids.sort();
            let rows = ids
                .into_iter()
                .map(|id| {
                    let p = corpus.publication(id)?;
                    Ok(json!({"pub_id": p.pub_id, "title": p.title, "num_citation": p.num_citation, "year": p.year}))
                })
                .collect::<Result<Vec<_>, ApiError>>()?;
            Ok(Value::Array(rows))
        }
        "searchPublication" => {
            only(params, &["publication_info"])?;
            let needle = required(params, "publication_info")?.to_lowercase();
            let hits: Vec<Value> = corpus
                .publications
                .values()
                .filter(|p| p.title.to_lowercase().contains(&needle))
                .map(|p| json!({"pub_id": p.pub_id, "title": p.title}))
                .collect();
            Ok(Value::Array(hits))
        }
        "getPublication" => {
            only(params, &["pub_id"])?;
            let p = corpus.publication(required(params, "pub_id")?)?;
            let authors = p
                .author_ids
                .iter()
                .map(|a| corpus.scholar(a).map(|s| json!({"person_id": s.person_id, "name": s.name})))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(json!({"title": p.title, "num_citation": p.num_citation, "year": p.year, "authors": authors}))
        }
        "getCoauthors" => {
            only(params, &["person_id"])?;
            let s = corpus.scholar(required(params, "person_id")?)?;
            let mut co = BTreeSet::new();
            for p in &s.pub_ids {
                for a in &corpus.publication(p)?.author_ids {
                    if a != &s.person_id {
                        co.insert(a.as_str());
                    }
                }
            }
            let rows = co
                .into_iter()
                .map(|a| corpus.scholar(a).map(|c| json!({"person_id": c.person_id, "name": c.name})))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Array(rows))
        }
        other => Err(ApiError::NotFound(format!("unknown API `{other}`"))),
    }
}

/// Wire form: `{"ok": true, "data": ...}` or `{"ok": false, "error": {"code", "message"}}`.
pub fn envelope(result: &Result<Value, ApiError>) -> String {
    let v = match result {
        Ok(data) => json!({"ok": true, "data": data}),
        Err(e) => {
            let message = match e {
                ApiError::NotFound(m) | ApiError::BadRequest(m) | ApiError::Transport(m) | ApiError::Protocol(m) => m,
            };
            json!({"ok": false, "error": {"code": e.code(), "message": message}})
        }
    };
    canonical_json(&v)
}

pub fn parse_envelope(body: &str) -> Result<Value, ApiError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ApiError::Protocol(format!("invalid JSON: {e}")))?;
    match v.get("ok").and_then(Value::as_bool) {
        Some(true) => v.get("data").cloned().ok_or_else(|| ApiError::Protocol("missing `data`".into())),
        Some(false) => {
            let err = v.get("error").ok_or_else(|| ApiError::Protocol("missing `error`".into()))?;
            let code = err.get("code").and_then(Value::as_str).unwrap_or("");
            let message = err.get("message").and_then(Value::as_str).unwrap_or("").to_string();
            Err(match code {
                "NOT_FOUND" => ApiError::NotFound(message),
                "BAD_REQUEST" => ApiError::BadRequest(message),
                other => ApiError::Protocol(format!("unknown error code `{other}`: {message}")),
            })
        }
        None => Err(ApiError::Protocol("missing `ok`".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn fixture() -> &'static Corpus {
        static C: OnceLock<Corpus> = OnceLock::new();
        C.get_or_init(|| generate_corpus(42, DEFAULT_SCHOLARS, DEFAULT_PUBS).unwrap())
    }

    fn args(pairs: &[(&str, &str)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), json!(v))).collect()
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_corpus(42, DEFAULT_SCHOLARS, DEFAULT_PUBS).unwrap();
        assert_eq!(a.to_json(), fixture().to_json());
        let b = generate_corpus(43, DEFAULT_SCHOLARS, DEFAULT_PUBS).unwrap();
        assert_ne!(a.snapshot_id, b.snapshot_id);
    }

    #[test]
    fn single_scholar_single_pub() {
        let c = generate_corpus(7, 1, 1).unwrap();
        assert_eq!(c.scholars.len(), 1);
        assert_eq!(c.publications.len(), 1);
        let p = c.publications.values().next().unwrap();
        assert_eq!(p.author_ids, vec![person_id(0)]);
        assert_eq!(c.scholars[&person_id(0)].pub_ids, vec![pub_id(0)]);
    }

    #[test]
    fn invalid_counts() {
        assert!(generate_corpus(1, 0, 5).is_err());
        assert!(generate_corpus(1, 5, 4).is_err());
    }

    #[test]
    fn integrity_sweep() {
        let c = fixture();
        for p in c.publications.values() {
            assert!(!p.author_ids.is_empty());
            for a in &p.author_ids {
                assert!(c.scholars[a].pub_ids.contains(&p.pub_id));
            }
            assert!((YEAR_RANGE.0..=YEAR_RANGE.1).contains(&p.year));
            assert!(p.num_citation >= 0);
        }
        for s in c.scholars.values() {
            assert!(!s.pub_ids.is_empty());
            for id in &s.pub_ids {
                assert!(c.publications[id].author_ids.contains(&s.person_id));
            }
        }
    }

    #[test]
    fn shape_properties() {
        let c = fixture();
        let names: BTreeSet<&str> = c.scholars.values().map(|s| s.name.as_str()).collect();
        assert_eq!(names.len(), c.scholars.len());
        let multi = c.scholars.values().filter(|s| s.pub_ids.len() >= 2).count();
        assert!(multi * 2 >= c.scholars.len(), "{multi}");
        let cites: BTreeSet<i64> = c.publications.values().map(|p| p.num_citation).collect();
        assert_eq!(cites.len(), c.publications.len());
    }

    #[test]
    fn titles_never_contain_each_other() {
        let titles: Vec<String> = fixture().publications.values().map(|p| p.title.to_lowercase()).collect();
        for w in [TITLE_ADJ, TITLE_TASK] {
            for a in w {
                for b in w {
                    if a != b {
                        assert!(!b.starts_with(a) && !b.ends_with(a), "{a} / {b}");
                    }
                }
            }
        }
        // Spot check the structural argument on a slice of the corpus.
        for a in titles.iter().take(300) {
            assert_eq!(titles.iter().filter(|b| b.contains(a.as_str())).count(), 1, "{a}");
        }
    }

    #[test]
    fn search_person_finds_scanned_scholar() {
        let c = fixture();
        for s in c.scholars.values().step_by(97) {
            let hits = query_endpoint(c, "searchPerson", &args(&[("name", &s.name.to_uppercase())])).unwrap();
            let ids: Vec<&str> = hits.as_array().unwrap().iter().map(|h| h["person_id"].as_str().unwrap()).collect();
            assert_eq!(ids, vec![s.person_id.as_str()]);
        }
        let org = &c.scholars[&person_id(0)].organization;
        let hits = query_endpoint(c, "searchPerson", &args(&[("organization", org)])).unwrap();
        let expected: Vec<&str> =
            c.scholars.values().filter(|s| &s.organization == org).map(|s| s.person_id.as_str()).collect();
        let got: Vec<&str> = hits.as_array().unwrap().iter().map(|h| h["person_id"].as_str().unwrap()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn not_found_and_bad_request() {
        let c = fixture();
        assert!(matches!(
            query_endpoint(c, "getPersonPubs", &args(&[("person_id", "P9999999")])),
            Err(ApiError::NotFound(_))
        ));
        assert!(matches!(query_endpoint(c, "getPersonPubs", &args(&[])), Err(ApiError::BadRequest(_))));
        assert!(matches!(query_endpoint(c, "searchPerson", &args(&[])), Err(ApiError::BadRequest(_))));
        assert!(matches!(
            query_endpoint(c, "getPublication", &args(&[("pub_id", "W0000001"), ("x", "y")])),
            Err(ApiError::BadRequest(_))
        ));
        assert!(matches!(query_endpoint(c, "noSuchApi", &args(&[])), Err(ApiError::NotFound(_))));
    }

    #[test]
    fn list_endpoints_are_ordered() {
        let c = fixture();
        let s = &c.scholars[&person_id(3)];
        let pubs = query_endpoint(c, "getPersonPubs", &args(&[("person_id", &s.person_id)])).unwrap();
        let ids: Vec<&str> = pubs.as_array().unwrap().iter().map(|p| p["pub_id"].as_str().unwrap()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(ids.len(), s.pub_ids.len());

        let co = query_endpoint(c, "getCoauthors", &args(&[("person_id", &s.person_id)])).unwrap();
        let co: Vec<&str> = co.as_array().unwrap().iter().map(|p| p["person_id"].as_str().unwrap()).collect();
        let mut oracle: Vec<&str> = s
            .pub_ids
            .iter()
            .flat_map(|p| c.publications[p].author_ids.iter().map(String::as_str))
            .filter(|a| *a != s.person_id)
            .collect();
        oracle.sort();
        oracle.dedup();
        assert_eq!(co, oracle);
    }

    #[test]
    fn envelope_round_trip_is_byte_stable() {
        let c = fixture();
        let a = args(&[("pub_id", "W0000010")]);
        let body1 = envelope(&query_endpoint(c, "getPublication", &a));
        let body2 = envelope(&query_endpoint(&Corpus::from_json(&c.to_json()).unwrap(), "getPublication", &a));
        assert_eq!(body1, body2);
        assert_eq!(parse_envelope(&body1).unwrap(), query_endpoint(c, "getPublication", &a).unwrap());
        let err = envelope(&Err(ApiError::NotFound("x".into())));
        assert_eq!(err, r#"{"error":{"code":"NOT_FOUND","message":"x"},"ok":false}"#);
        assert_eq!(parse_envelope(&err), Err(ApiError::NotFound("x".into())));
    }

    #[test]
    fn tampered_snapshot_is_rejected() {
        let text = generate_corpus(1, 5, 6).unwrap().to_json().replace("\"year\":", "\"year\":1");
        assert!(Corpus::from_json(&text).is_err());
    }
}
