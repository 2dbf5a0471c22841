// temporary preset calibration probes
use quilt::experiment::{run_preset, subset_mauc, ExperimentOptions, Preset};
use std::time::Instant;

fn show(preset: Preset) -> quilt::experiment::PresetReport {
    let t0 = Instant::now();
    let report = run_preset(preset, &ExperimentOptions::default()).unwrap();
    println!("== {} ({:.1?}) ==", report.preset, t0.elapsed());
    println!("{}", report.summary());
    report
}

#[test]
#[ignore]
fn probe_mnist_zero_preset() {
    let r = show(Preset::MnistZero);
    let c = r.comparison("auc-of-zero").unwrap();
    println!("margins {:?} mean {:+.5}", c.margins(), c.mean_a() - c.mean_b());
}

#[test]
#[ignore]
fn probe_odd_even() {
    let r = show(Preset::OddEvenAssembly);
    const ODDS: [&str; 5] = ["1", "3", "5", "7", "9"];
    const EVENS: [&str; 5] = ["0", "2", "4", "6", "8"];
    for (solo, classes) in [("d0-only", &ODDS), ("d1-only", &EVENS)] {
        for &seed in &r.seeds {
            let asm = r.outcomes.iter().find(|o| o.arm == "assembled" && o.seed == seed).unwrap();
            let solo_o = r.outcomes.iter().find(|o| o.arm == solo && o.seed == seed).unwrap();
            let asm_side = subset_mauc(&asm.test_metrics, classes).unwrap();
            println!(
                "{solo} seed {seed}: assembled-side {asm_side:.4} vs solo {:.4} margin {:+.4}",
                solo_o.headline,
                asm_side - solo_o.headline
            );
        }
    }
}

#[test]
#[ignore]
fn probe_partial_overlap() {
    let r = show(Preset::PartialOverlap);
    let fm = r.headlines("full-method");
    let fl = r.headlines("full-label");
    let base = r.headlines("assembly-bce");
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "full-method {:.4} vs full-label {:.4} (gap {:+.4}) vs base {:.4} (margin {:+.4})",
        mean(&fm), mean(&fl), mean(&fm) - mean(&fl), mean(&base), mean(&fm) - mean(&base)
    );
}

#[test]
#[ignore]
fn probe_sharpen() {
    show(Preset::SharpenAblation);
}

#[test]
#[ignore]
fn probe_novel() {
    let r = show(Preset::NovelAttack);
    let a = r.headlines("adapter");
    let b = r.headlines("fixed-encoding");
    let wins = a.iter().zip(&b).filter(|(x, y)| x > y).count();
    println!("adapter {a:?} vs fixed {b:?}: wins {wins}/3");
}

#[test]
#[ignore]
fn probe_multi() {
    let r = show(Preset::MultiLabel);
    let a = r.headlines("adapter");
    let b = r.headlines("no-adapter");
    let wins = a.iter().zip(&b).filter(|(x, y)| x >= y).count();
    println!("adapter {a:?} vs plain {b:?}: wins {wins}/3");
}
