//! Test-only reference implementations, written independently of the
//! library's index code.

#![allow(dead_code)]

use thistle_core::{DocRecord, Embedding, Metric};

pub fn naive_distance(metric: Metric, a: &[f32], b: &[f32]) -> f64 {
    match metric {
        Metric::Euclidean => {
            let mut s = 0.0f64;
            for i in 0..a.len() {
                let d = a[i] as f64 - b[i] as f64;
                s += d * d;
            }
            s.sqrt()
        }
        Metric::Cosine => {
            let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
            for i in 0..a.len() {
                ab += a[i] as f64 * b[i] as f64;
                aa += a[i] as f64 * a[i] as f64;
                bb += b[i] as f64 * b[i] as f64;
            }
            1.0 - (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0)
        }
    }
}

/// Double loop: score everything, then repeatedly pick the minimum.
pub fn naive_knn(
    records: &[DocRecord],
    query: &Embedding,
    k: usize,
    metric: Metric,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = Vec::new();
    for r in records {
        scored.push((
            r.id.clone(),
            naive_distance(metric, query.as_slice(), r.embedding.as_slice()),
        ));
    }
    let mut out = Vec::new();
    for _ in 0..k.min(scored.len()) {
        let mut best = 0;
        for j in 1..scored.len() {
            let (ref id, d) = scored[j];
            let (ref bid, bd) = scored[best];
            if d < bd || (d == bd && id < bid) {
                best = j;
            }
        }
        out.push(scored.swap_remove(best));
    }
    out
}

pub fn recall(found: &[String], truth: &[String]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    found.iter().filter(|f| truth.contains(f)).count() as f64 / truth.len() as f64
}
