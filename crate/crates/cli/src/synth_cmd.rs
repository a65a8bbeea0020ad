use compbound::synth::{self, SynthParams};

use crate::output::OutDir;
use crate::{Failure, SynthArgs, SynthKind};

pub fn run(a: &SynthArgs) -> Result<(), Failure> {
    let p = SynthParams {
        widths: a.widths.clone(),
        n: a.n,
        clip_level: a.clip_m,
        seed: a.seed,
    };
    let made = match a.kind {
        SynthKind::LowrankWeights => synth::lowrank_weights(&p, a.v0, a.alpha, a.rank, a.b_x),
        SynthKind::LowrankCov => synth::lowrank_cov(&p, a.u0, a.beta, a.alpha),
        SynthKind::Sparse => synth::sparse(&p, a.density, a.b_x),
        SynthKind::ToyCnn => synth::toy_cnn(a.seed),
    };
    let fx = made.map_err(|e| match e {
        compbound::Error::Validation(m) => Failure::Usage(m),
        other => other.into(),
    })?;
    OutDir::create(&a.out)?.write_fixture(&fx)?;
    Ok(())
}
