use super::AbaError;
use crate::types::{Deployment, Threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OneStepOutcome {
    Decide(bool),
    Adopt(bool),
    Fallthrough,
}

/// Evaluates the one-step predicate over exactly `n - f` votes.
///
/// Decides `v` when `count(v) > (n + 3f) / 2` and adopts `v` when
/// `count(v) > (n - f) / 2` for a unique `v`. Both comparisons are over the
/// rationals, done here as `2 * count > ...`.
pub fn onestep_evaluate(
    dep: &Deployment,
    zeros: usize,
    ones: usize,
) -> Result<OneStepOutcome, AbaError> {
    let (n, f) = (dep.n(), dep.f());
    let expected = dep.threshold(Threshold::NMinusF);
    if zeros + ones != expected {
        return Err(AbaError::TallySize {
            got: zeros + ones,
            expected,
        });
    }
    for (v, count) in [(false, zeros), (true, ones)] {
        if 2 * count > n + 3 * f {
            return Ok(OneStepOutcome::Decide(v));
        }
    }
    let adopt: Vec<bool> = [(false, zeros), (true, ones)]
        .into_iter()
        .filter(|&(_, c)| 2 * c > n - f)
        .map(|(v, _)| v)
        .collect();
    Ok(match adopt.as_slice() {
        [v] => OneStepOutcome::Adopt(*v),
        _ => OneStepOutcome::Fallthrough,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Resilience;

    /// Independent oracle: smallest integer strictly above a rational bound.
    fn min_above(num: usize, den: usize) -> usize {
        num / den + 1
    }

    #[test]
    fn w1s_thresholds() {
        let dep = Deployment::new(6, 1, Resilience::FiveF).unwrap();
        // decide needs count > 9/2, adopt needs count > 5/2
        assert_eq!(min_above(9, 2), 5);
        assert_eq!(min_above(5, 2), 3);
        assert_eq!(
            onestep_evaluate(&dep, 0, 5).unwrap(),
            OneStepOutcome::Decide(true)
        );
        assert_eq!(
            onestep_evaluate(&dep, 1, 4).unwrap(),
            OneStepOutcome::Adopt(true)
        );
        assert_eq!(
            onestep_evaluate(&dep, 5, 0).unwrap(),
            OneStepOutcome::Decide(false)
        );
        assert_eq!(
            onestep_evaluate(&dep, 2, 3).unwrap(),
            OneStepOutcome::Adopt(true)
        );
    }

    #[test]
    fn s1s_thresholds() {
        let dep = Deployment::new(8, 1, Resilience::SevenF).unwrap();
        assert_eq!(min_above(8 + 3, 2), 6);
        assert_eq!(
            onestep_evaluate(&dep, 1, 6).unwrap(),
            OneStepOutcome::Decide(true)
        );
        assert_eq!(
            onestep_evaluate(&dep, 2, 5).unwrap(),
            OneStepOutcome::Adopt(true)
        );
        assert_eq!(
            onestep_evaluate(&dep, 4, 3).unwrap(),
            OneStepOutcome::Adopt(false)
        );
    }

    #[test]
    fn fallthrough_on_tie() {
        let dep = Deployment::new(7, 1, Resilience::FiveF).unwrap();
        // n - f = 6: a 3/3 split adopts nothing.
        assert_eq!(
            onestep_evaluate(&dep, 3, 3).unwrap(),
            OneStepOutcome::Fallthrough
        );
        let dep = Deployment::new(11, 2, Resilience::FiveF).unwrap();
        // n - f = 9, adopt needs count > 4.5; 4/5 adopts 1, never both.
        assert_eq!(
            onestep_evaluate(&dep, 4, 5).unwrap(),
            OneStepOutcome::Adopt(true)
        );
        let dep = Deployment::new(16, 3, Resilience::FiveF).unwrap();
        // n - f = 13, adopt needs > 6.5.
        assert_eq!(
            onestep_evaluate(&dep, 6, 7).unwrap(),
            OneStepOutcome::Adopt(true)
        );
        let dep = Deployment::new(4, 1, Resilience::ThreeF).unwrap();
        // n - f = 3, adopt needs > 1.5 and decide > 3.5: unreachable.
        assert_eq!(
            onestep_evaluate(&dep, 0, 3).unwrap(),
            OneStepOutcome::Adopt(true)
        );
    }

    #[test]
    fn wrong_tally_size() {
        let dep = Deployment::new(6, 1, Resilience::FiveF).unwrap();
        assert!(matches!(
            onestep_evaluate(&dep, 3, 3),
            Err(AbaError::TallySize {
                got: 6,
                expected: 5
            })
        ));
    }

    #[test]
    fn oracle_agrees_everywhere() {
        for f in 0..4usize {
            for n in (5 * f + 1)..(9 * f + 3) {
                let dep = Deployment::new(n, f, Resilience::FiveF).unwrap();
                let q = n - f;
                for ones in 0..=q {
                    let zeros = q - ones;
                    let decide_at = min_above(n + 3 * f, 2);
                    let adopt_at = min_above(n - f, 2);
                    let want = if ones >= decide_at {
                        OneStepOutcome::Decide(true)
                    } else if zeros >= decide_at {
                        OneStepOutcome::Decide(false)
                    } else if ones >= adopt_at && zeros < adopt_at {
                        OneStepOutcome::Adopt(true)
                    } else if zeros >= adopt_at && ones < adopt_at {
                        OneStepOutcome::Adopt(false)
                    } else {
                        OneStepOutcome::Fallthrough
                    };
                    assert_eq!(
                        onestep_evaluate(&dep, zeros, ones).unwrap(),
                        want,
                        "n={n} f={f} ones={ones}"
                    );
                }
            }
        }
    }
}
