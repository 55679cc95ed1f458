use crate::error::{Error, Result};
use crate::mg_core::{FiniteMG, Layout, ObservationMap, Outcome};

/// The stateless game where the team scores 1 only when the first half of
/// the agents plays 0 and the second half plays 1. `n` must be even.
pub fn kuba_game(n: usize) -> Result<FiniteMG> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParam(format!(
            "the split-action game needs an even number of agents, got {n}"
        )));
    }
    let layout = Layout::homogeneous(n, &["s", "done"], &["0", "1"]);
    FiniteMG::tabulate(
        layout,
        1.0,
        &[(vec![0; n], 1.0)],
        |s| s.iter().all(|&k| k == 1),
        |s, a| {
            let rewarding = s.iter().all(|&k| k == 0)
                && a.iter().enumerate().all(|(i, &u)| u == usize::from(i >= n / 2));
            Outcome {
                next: vec![(vec![1; n], 1.0)],
                rewards: vec![if rewarding { 1.0 } else { 0.0 }; n],
            }
        },
    )
}

/// Every agent observes the raw joint state.
pub fn kuba_observations(mg: &FiniteMG) -> Result<ObservationMap> {
    ObservationMap::tabulate(mg, true, |_, s| {
        s.iter()
            .map(|&k| if k == 0 { "s" } else { "done" })
            .collect::<Vec<_>>()
            .join(",")
    })
}
