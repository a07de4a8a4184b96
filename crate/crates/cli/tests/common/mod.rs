//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// (term, positive sentence, negative sentence, uncertain sentence)
const FINDINGS: &[(&str, &str, &str, &str)] = &[
    (
        "cardiomegaly",
        "There is cardiomegaly.",
        "No cardiomegaly.",
        "Possible mild cardiomegaly.",
    ),
    (
        "edema",
        "There is pulmonary edema.",
        "No pulmonary edema.",
        "Findings may represent mild edema.",
    ),
    (
        "consolidation",
        "There is right lower lobe consolidation.",
        "No focal consolidation.",
        "Possible left basilar consolidation.",
    ),
    (
        "pneumonia",
        "Findings are consistent with pneumonia.",
        "No evidence of pneumonia.",
        "Cannot exclude pneumonia.",
    ),
    (
        "pneumothorax",
        "There is a small right pneumothorax.",
        "There is no pneumothorax.",
        "Questionable tiny apical pneumothorax.",
    ),
    (
        "effusion",
        "There is a small left pleural effusion.",
        "No pleural effusion.",
        "Possible small pleural effusion.",
    ),
    (
        "atelectasis",
        "There is bibasilar atelectasis.",
        "No atelectasis.",
        "Possible subsegmental atelectasis.",
    ),
];

const FILLER: &[&str] = &[
    "The mediastinal contours are unremarkable.",
    "Osseous structures are intact.",
    "The trachea is midline.",
];

/// One report per entry; the first and last halves share no ids.
pub fn synthetic_reports(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut sentences = Vec::new();
            for (_, pos, neg, unc) in FINDINGS {
                let r: f64 = rng.random();
                if r < 0.35 {
                    sentences.push(*pos);
                } else if r < 0.75 {
                    sentences.push(*neg);
                } else if r < 0.85 {
                    sentences.push(*unc);
                }
            }
            sentences.push(FILLER[i % FILLER.len()]);
            (
                format!("case_{i:04}"),
                format!("Findings: {}", sentences.join(" ")),
            )
        })
        .collect()
}

/// Same ids, each finding sentence independently re-drawn with probability `p`.
pub fn perturbed(reports: &[(String, String)], p: f64, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reports
        .iter()
        .map(|(id, text)| {
            let mut text = text.clone();
            for (_, pos, neg, _) in FINDINGS {
                if rng.random::<f64>() < p {
                    if text.contains(pos) {
                        text = text.replace(pos, neg);
                    } else if text.contains(neg) {
                        text = text.replace(neg, pos);
                    }
                }
            }
            (id.clone(), text)
        })
        .collect()
}

pub fn write_reports(path: &Path, reports: &[(String, String)]) {
    let body: String = reports
        .iter()
        .map(|(id, text)| json!({ "id": id, "text": text }).to_string() + "\n")
        .collect();
    std::fs::write(path, body).unwrap();
}

/// Corpus with abnormal flags, reference texts and image paths.
pub fn write_study_corpus(path: &Path, n_abnormal: usize, n_normal: usize) {
    let mut body = String::new();
    for i in 0..n_abnormal + n_normal {
        let abnormal = i < n_abnormal;
        let text = if abnormal {
            "Findings: Small right pleural effusion."
        } else {
            "Findings: Lungs are clear."
        };
        let line = json!({
            "id": format!("patient_s{i}"),
            "text": text,
            "ground_truth_text": format!("Findings: Reference reading {i}."),
            "abnormal": abnormal,
            "image": format!("patient_s{i}.png"),
        });
        body.push_str(&line.to_string());
        body.push('\n');
    }
    std::fs::write(path, body).unwrap();
}

/// Run the CLI in-process.
pub fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["cxreval"];
    argv.extend_from_slice(args);
    cxreval_cli::run(argv)
}
