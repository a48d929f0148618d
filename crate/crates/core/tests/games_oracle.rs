use proptest::prelude::*;
use robcomm_core::games::*;

fn dist(w: &[u32]) -> Vec<Q> {
    let total: i64 = w.iter().map(|x| *x as i64).sum::<i64>().max(1);
    if w.iter().all(|x| *x == 0) {
        let mut v = vec![q(0, 1); w.len()];
        v[0] = q(1, 1);
        return v;
    }
    w.iter().map(|x| q(*x as i64, total)).collect()
}

fn game(ns: usize, na: usize, prior: &[u32], us: &[i64], ur: &[i64]) -> FiniteGame {
    let table = |v: &[i64]| (0..na).map(|a| (0..ns).map(|w| q(v[a * ns + w], 1)).collect()).collect();
    FiniteGame::new(
        (0..ns).map(|i| format!("w{i}")).collect(),
        dist(&prior[..ns]),
        (0..na).map(|i| format!("a{i}")).collect(),
        table(us),
        table(ur),
    )
    .unwrap()
}

/// Truthful reporting and obedience, restated directly.
fn oracle(g: &FiniteGame, phi: &[Vec<Q>]) -> (bool, Q, Q) {
    let (ns, na) = (g.states.len(), g.actions.len());
    let zero = q(0, 1);
    let mut ok = true;
    for w in 0..ns {
        let value = |report: usize| (0..na).fold(zero.clone(), |acc, a| acc + &phi[report][a] * &g.u_s[a][w]);
        for r in 0..ns {
            ok &= value(w) >= value(r);
        }
    }
    for a in 0..na {
        for b in 0..na {
            let gain = (0..ns).fold(zero.clone(), |acc, w| {
                acc + &g.prior[w] * &phi[w][a] * (&g.u_r[a][w] - &g.u_r[b][w])
            });
            ok &= gain >= zero;
        }
    }
    let total = |u: &Vec<Vec<Q>>| {
        (0..ns).fold(zero.clone(), |acc, w| {
            acc + (0..na).fold(zero.clone(), |x, a| x + &g.prior[w] * &phi[w][a] * &u[a][w])
        })
    };
    (ok, total(&g.u_s), total(&g.u_r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn device_check_matches_oracle(
        ns in 2usize..=3,
        na in 2usize..=3,
        prior in prop::collection::vec(1u32..4, 3),
        us in prop::collection::vec(-3i64..=3, 9),
        ur in prop::collection::vec(-3i64..=3, 9),
        rows in prop::collection::vec(prop::collection::vec(0u32..3, 3), 3),
    ) {
        let g = game(ns, na, &prior, &us, &ur);
        let phi: Vec<Vec<Q>> = rows[..ns].iter().map(|r| dist(&r[..na])).collect();
        let d = CommDevice::new(&g, phi.clone()).unwrap();
        let (ok, s, r) = oracle(&g, &phi);
        let res = verify_comm_eq(&g, &d);
        prop_assert_eq!(res.is_ok(), ok);
        let rep = match res { Ok(r) | Err(r) => r };
        prop_assert_eq!(rep.sender_payoff, s);
        prop_assert_eq!(rep.receiver_payoff, r);
        let mu = device_outcome(&g, &d);
        let mass = mu.weights.iter().flatten().fold(q(0, 1), |a, b| a + b);
        prop_assert_eq!(mass, q(1, 1));
    }
}

#[test]
fn farrell_device_against_oracle() {
    let g = FiniteGame::farrell();
    let d = CommDevice::farrell();
    assert_eq!(oracle(&g, &d.phi), (true, q(3, 2), q(9, 4)));
    let revealing = vec![vec![q(1, 1), q(0, 1), q(0, 1)], vec![q(0, 1), q(0, 1), q(1, 1)]];
    assert!(!oracle(&g, &revealing).0);
}
