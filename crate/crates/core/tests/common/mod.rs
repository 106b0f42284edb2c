#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use refinery::seed;
use refinery::Document;

/// Random token drawn from a vocabulary large enough that two independent
/// documents almost never share a 5-gram.
pub fn token<R: Rng>(rng: &mut R) -> String {
    format!("w{}", rng.random_range(0..2_000_000u32))
}

pub fn random_words<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    (0..n).map(|_| token(rng)).collect()
}

pub fn shingle_set(words: &[String], n: usize) -> BTreeSet<String> {
    if words.len() < n {
        return [words.join(" ")].into();
    }
    words.windows(n).map(|w| w.join(" ")).collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub struct PlantedCorpus {
    pub docs: Vec<Document>,
    /// Member positions of each planted cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    pub distractors: Vec<usize>,
}

/// `total` documents of which `clusters` groups of 2..=4 are near-duplicate
/// variants of a common base (last word swapped or one word appended); the
/// rest are independent random documents. Positions are shuffled.
pub fn planted_corpus(total: usize, clusters: usize, seed: u64) -> PlantedCorpus {
    let mut rng = seed::rng(seed);
    let mut groups: Vec<Vec<Vec<String>>> = Vec::new();
    let mut planted = 0;
    for c in 0..clusters {
        let len = rng.random_range(60..=100);
        let base = random_words(&mut rng, len);
        let size = rng.random_range(2..=4);
        let mut members = vec![base.clone()];
        for k in 1..size {
            let mut v = base.clone();
            if k % 2 == 1 {
                *v.last_mut().unwrap() = format!("edit{c}x{k}");
            } else {
                v.push(format!("tail{c}x{k}"));
            }
            members.push(v);
        }
        planted += members.len();
        groups.push(members);
    }
    assert!(planted <= total);
    let mut slots: Vec<(Option<usize>, Vec<String>)> = Vec::with_capacity(total);
    for (g, members) in groups.into_iter().enumerate() {
        slots.extend(members.into_iter().map(|m| (Some(g), m)));
    }
    while slots.len() < total {
        let n = rng.random_range(60..=100);
        slots.push((None, random_words(&mut rng, n)));
    }
    slots.shuffle(&mut rng);

    let mut cluster_pos = vec![Vec::new(); clusters];
    let mut distractors = Vec::new();
    let docs = slots
        .into_iter()
        .enumerate()
        .map(|(i, (g, words))| {
            match g {
                Some(g) => cluster_pos[g].push(i),
                None => distractors.push(i),
            }
            Document::new(format!("doc{i:05}"), "id", "synthetic", words.join(" "))
        })
        .collect();
    PlantedCorpus {
        docs,
        clusters: cluster_pos,
        distractors,
    }
}

/// Exact-Jaccard audit of a planted corpus: the minimum pairwise J inside
/// clusters and the maximum J between documents of different groups
/// (checked for every pair sharing at least one shingle).
pub fn audit_planted(corpus: &PlantedCorpus, n: usize) -> (f64, f64) {
    let sets: Vec<BTreeSet<String>> = corpus
        .docs
        .iter()
        .map(|d| {
            let words: Vec<String> = d.text.split_whitespace().map(str::to_string).collect();
            shingle_set(&words, n)
        })
        .collect();
    let mut group = vec![usize::MAX; sets.len()];
    let mut min_within: f64 = 1.0;
    for (g, members) in corpus.clusters.iter().enumerate() {
        for (i, &a) in members.iter().enumerate() {
            group[a] = g;
            for &b in &members[i + 1..] {
                min_within = min_within.min(jaccard(&sets[a], &sets[b]));
            }
        }
    }
    let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in sets.iter().enumerate() {
        for sh in s {
            index.entry(sh.as_str()).or_default().push(i);
        }
    }
    let mut max_across: f64 = 0.0;
    let mut seen = BTreeSet::new();
    for ids in index.values() {
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                if (group[a] == group[b] && group[a] != usize::MAX) || !seen.insert((a, b)) {
                    continue;
                }
                max_across = max_across.max(jaccard(&sets[a], &sets[b]));
            }
        }
    }
    (min_within, max_across)
}

const ID_WORDS: &[&str] = &[
    "kami", "pergi", "ke", "pasar", "dan", "membeli", "sayur", "yang", "segar", "di", "pagi", "hari", "itu",
    "bersama", "keluarga", "besar", "ini", "rumah", "makan", "ikan", "kota", "jalan", "baru", "anak", "sekolah",
    "buku", "air", "hujan", "malam", "teman", "kerja", "kantor", "pulang", "cepat", "lambat", "harga",
];
const TH_WORDS: &[&str] = &[
    "วันนี้", "อากาศ", "ดี", "มาก", "เรา", "ไป", "ตลาด", "กัน", "ซื้อ", "ผัก", "สด", "และ", "ผลไม้", "หลาย",
    "อย่าง", "กลับ", "บ้าน", "ตอน", "เย็น", "แมว", "กิน", "ปลา",
];
const MS_WORDS: &[&str] = &[
    "saya", "suka", "makan", "nasi", "lemak", "pada", "waktu", "pagi", "bersama", "kawan", "di", "kedai", "kopi",
    "kampung", "sungai", "perahu", "bandar", "jalan",
];

/// Pseudo-natural sentence in one of `id`, `th`, `ms`.
pub fn sentence<R: Rng>(rng: &mut R, lang: &str, words: usize) -> String {
    let vocab = match lang {
        "th" => TH_WORDS,
        "ms" => MS_WORDS,
        _ => ID_WORDS,
    };
    let sep = if lang == "th" { "" } else { " " };
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push_str(if lang == "th" && i % 4 == 0 { " " } else { sep });
        }
        out.push_str(vocab[rng.random_range(0..vocab.len())]);
    }
    out.push('.');
    out
}

/// Small multilingual corpus of paragraph-sized documents.
pub fn multilingual_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = seed::rng(seed);
    let langs = ["id", "th", "ms"];
    (0..n)
        .map(|i| {
            let lang = langs[i % langs.len()];
            let sentences = rng.random_range(1..=6);
            let text = (0..sentences)
                .map(|_| {
                    let w = rng.random_range(6..=18);
                    sentence(&mut rng, lang, w)
                })
                .collect::<Vec<_>>()
                .join(" ");
            Document::new(format!("{lang}{i:05}"), lang, "web", text)
        })
        .collect()
}
