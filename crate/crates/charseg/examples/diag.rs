//! Scratch diagnostic: categorize block-segment errors of the baseline and
//! augmented feature sets on a synthetic dev split. Knobs via env vars.

use std::collections::HashMap;

use charseg::corpus::{
    generate_synthetic, split_corpus, to_bio, BioTag, LabeledSequence, Segment, SegmentLabel,
    SynthConfig,
};
use charseg::crf::{self, CrfModel, TrainOptions};
use charseg::eval::{extract_segments, segment_prf};
use charseg::features::{featurize_dataset, featurize_sequence};
use charseg::srn::{train_lm, SrnConfig, SrnModel};

fn knob(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let docs_n = knob("DOCS", 500.0) as usize;
    let seed = knob("SEED", 7.0) as u64;
    let mix = knob("MIX", 0.35);
    let noise = knob("NOISE", 0.10);
    let quote = knob("QUOTE", 0.40);
    let lm_iters = knob("LM_ITERS", 16.0) as usize;
    let crf_iters = knob("CRF_ITERS", 60.0) as usize;
    let k = knob("TOPK", 10.0) as usize;
    let fraction = knob("FRACTION", 100.0);
    let verbose = knob("VERBOSE", 0.0) as usize;

    let synth = SynthConfig {
        n_docs: docs_n,
        code_prose_mix: mix,
        noise_rate: noise,
        quote_rate: quote,
        ..SynthConfig::default()
    };
    let docs = generate_synthetic(&synth, seed).expect("valid config");
    let total: usize = docs.iter().map(|d| d.char_len()).sum();
    println!("corpus: {} docs, {} chars", docs.len(), total);

    let splits = split_corpus(docs, [0.5, 0.3, 0.1, 0.1], seed).expect("enough docs");
    let lm_texts: Vec<&str> = splits.unlabeled.iter().map(|d| d.text.as_str()).collect();
    let valid_texts: Vec<&str> = splits.dev.iter().map(|d| d.text.as_str()).collect();
    let lm_config = SrnConfig {
        hidden_units: 40,
        bptt_steps: 10,
        max_iterations: lm_iters,
        seed,
        ..SrnConfig::default()
    };
    let lm = train_lm(&lm_texts, &lm_config, &valid_texts).expect("trains");

    let pool: Vec<LabeledSequence> = splits.train.iter().map(to_bio).collect();
    let n_prefix = ((pool.len() as f64) * fraction / 100.0).round() as usize;
    let prefix = &pool[..n_prefix.max(1)];
    println!("labeled prefix: {} of {} sequences", prefix.len(), pool.len());
    let dev: Vec<LabeledSequence> = splits.dev.iter().map(to_bio).collect();
    let options = TrainOptions { max_iterations: crf_iters, ..TrainOptions::default() };

    let gold: Vec<Vec<Segment>> = dev.iter().map(|s| extract_segments(&s.tags)).collect();

    for set in ["baseline", "augmented"] {
        let (model_ref, kk): (Option<&SrnModel>, usize) =
            if set == "augmented" { (Some(&lm), k) } else { (None, 0) };
        let seqs: Vec<(Vec<char>, Option<Vec<BioTag>>)> =
            prefix.iter().map(|s| (s.chars.clone(), Some(s.tags.clone()))).collect();
        let rows = featurize_dataset(&seqs, model_ref, kk).expect("featurize");
        let model: CrfModel = crf::crf_train(&rows, &options).expect("train");

        let mut pred: Vec<Vec<Segment>> = Vec::new();
        for seq in &dev {
            let rows = featurize_sequence(&seq.chars, None, model_ref, kk).expect("featurize");
            let tags = crf::label(&model, &rows).expect("label");
            pred.push(extract_segments(&tags));
        }
        let report = segment_prf(&gold, &pred);
        println!(
            "== {set}: block P {:.2} R {:.2} F1 {:.2} | inline F1 {:.2}",
            report.block.precision(),
            report.block.recall(),
            report.block.f1(),
            report.inline.f1()
        );

        // Error taxonomy over block segments.
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for (di, (g, p)) in gold.iter().zip(&pred).enumerate() {
            let chars = &dev[di].chars;
            let gb: Vec<&Segment> =
                g.iter().filter(|s| s.label == SegmentLabel::Block).collect();
            let pb: Vec<&Segment> =
                p.iter().filter(|s| s.label == SegmentLabel::Block).collect();
            let overlaps = |a: &Segment, b: &Segment| a.start < b.end && b.start < a.end;
            for gs in &gb {
                let hits: Vec<&&Segment> = pb.iter().filter(|ps| overlaps(gs, ps)).collect();
                let kind = match hits.len() {
                    0 => "gold: missed entirely",
                    1 if hits[0].start == gs.start && hits[0].end == gs.end => "gold: exact",
                    1 => "gold: extent off",
                    _ => "gold: split into pieces",
                };
                *counts.entry(kind).or_insert(0) += 1;
                if verbose > 0 && kind != "gold: exact" {
                    let lo = gs.start.saturating_sub(10);
                    let hi = (gs.end + 10).min(chars.len());
                    let text: String = chars[lo..hi].iter().collect();
                    println!(
                        "  doc {di} {kind}: gold {}..{} pred {:?} ctx {:?}",
                        gs.start,
                        gs.end,
                        hits.iter().map(|h| (h.start, h.end)).collect::<Vec<_>>(),
                        text
                    );
                }
            }
            for ps in &pb {
                let hits = gb.iter().filter(|gs| overlaps(gs, ps)).count();
                if hits == 0 {
                    // Where did the spurious block land? Indented non-block
                    // lines are quotes; anything else is prose/inline.
                    let span: String = chars[ps.start..ps.end.min(chars.len())].iter().collect();
                    let line_start = chars[..ps.start]
                        .iter()
                        .rposition(|&c| c == '\n')
                        .map(|i| i + 1)
                        .unwrap_or(0);
                    let indented = chars[line_start..].starts_with(&[' ', ' ']);
                    let kind = if indented {
                        "pred: spurious in quote"
                    } else {
                        "pred: spurious in prose"
                    };
                    *counts.entry(kind).or_insert(0) += 1;
                    if verbose > 1 {
                        println!("  doc {di} {kind}: {}..{} {:?}", ps.start, ps.end, span);
                    }
                } else if hits > 1 {
                    *counts.entry("pred: fused golds").or_insert(0) += 1;
                }
            }
        }
        let mut keys: Vec<_> = counts.iter().collect();
        keys.sort();
        for (k, v) in keys {
            println!("   {k}: {v}");
        }
    }
}
