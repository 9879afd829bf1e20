//! Draws several futures from an untrained Gaussian-head generator and scores
//! them with best-of-K displacement errors and the Gaussian-fit metrics.

use dtgan::data::synthetic::{synthetic_split, SyntheticConfig};
use dtgan::data::{ExtractConfig, SplitConfig};
use dtgan::generator::{generate, Generator, GeneratorConfig, OutputHead};
use dtgan::metrics::{ade_fde, amd, amv, fit_gaussians};

fn main() -> dtgan::Result<()> {
    let corpus = SyntheticConfig { groups: 2, ..SyntheticConfig::default() };
    let split_cfg = SplitConfig { extract: ExtractConfig::default(), val_fraction: 0.0, seed: 0 };
    let window = synthetic_split(&corpus, &corpus, &split_cfg).test.remove(0);

    let cfg = GeneratorConfig { head: OutputHead::Gaussian, ..GeneratorConfig::default() };
    let gen = Generator::new(cfg, 3)?;
    let preds = generate(&gen, &window, 11, 100)?;

    let (ade, fde) = ade_fde(&preds.take(20));
    let fit = fit_gaussians(&preds)?;
    println!("best of 20: ADE {ade:.3}  FDE {fde:.3}");
    println!("100-sample fit: AMD {:.3}  AMV {:.3}", amd(&fit, &preds.truth)?, amv(&fit));

    let g = &preds.distributions[0];
    println!(
        "sample 0, ped 0, first frame: mu ({:.3}, {:.3}) sigma ({:.3}, {:.3}) rho {:.3}",
        g.mu[0], g.mu[1], g.sigma[0], g.sigma[1], g.rho[0]
    );
    Ok(())
}
