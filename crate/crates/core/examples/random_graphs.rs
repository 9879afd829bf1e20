//! Random edge weights versus hand-defined ones, and how the attention of a
//! fresh generator reacts to them.

use dtgan::autodiff::Tape;
use dtgan::data::synthetic::{synthetic_split, SyntheticConfig};
use dtgan::data::{ExtractConfig, SplitConfig};
use dtgan::generator::{Generator, GeneratorConfig};
use dtgan::graph::{build_fixed_weights, build_graphs, WeightScheme};

fn main() -> dtgan::Result<()> {
    let corpus = SyntheticConfig { groups: 2, ..SyntheticConfig::default() };
    let split_cfg = SplitConfig { extract: ExtractConfig::default(), val_fraction: 0.0, seed: 0 };
    let split = synthetic_split(&corpus, &corpus, &split_cfg);
    let window = &split.test[0];
    let n = window.num_peds();

    for seed in [1, 2] {
        let g = build_graphs(window, seed)?;
        let row: Vec<String> = (0..n).map(|j| format!("{:.3}", g.edge(0, 0, j))).collect();
        println!("seed {seed}: frame 0, node 0 edges [{}]", row.join(", "));
    }
    let g = build_fixed_weights(window, WeightScheme::EuclideanReciprocal)?;
    let row: Vec<String> = (0..n).map(|j| format!("{:.3}", g.edge(0, 0, j))).collect();
    println!("1/distance:  frame 0, node 0 edges [{}]", row.join(", "));

    let gen = Generator::new(GeneratorConfig::default(), 7)?;
    let mut tape = Tape::new();
    let out = gen.forward(&mut tape, &build_graphs(window, 1)?)?;
    let alpha = tape.value(out.attention.coeffs);
    let modulated = tape.value(out.attention.modulated);
    println!("attention row 0:  {:?}", alpha[..n].iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>());
    println!("modulated row 0:  {:?}", modulated[..n].iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>());
    Ok(())
}
