//! Propagation of cabin occupancy from one station to the next.
//!
//! Riders arriving at a station are thinned by deboarding into stayers, the
//! cap policy `C = min(eta, gamma - S)` gives the capacity, and the boarders
//! `T = min(Z, C)` plus stayers ride on. `Z` and `C` are independent because
//! the queue at a cabin's arrival only depends on earlier cabins.
//!
//! A queue pmf passed here may be truncated: mass beyond its bound is read as
//! mass at the bound. Only `P[Z <= k]` for `k` below the largest capacity is
//! ever consulted.

use crate::distkit::Pmf;

#[derive(Clone, Debug, PartialEq)]
pub struct StationFlow {
    pub stay: Pmf,
    pub capacity: Pmf,
    pub board: Pmf,
    pub ride: Pmf,
    pub stable: bool,
}

/// Stayers among the riders of the previous leg.
pub fn stay_dist(ride_prev: &Pmf, sigma: f64) -> Pmf {
    ride_prev.binomial_thin(1.0 - sigma)
}

/// Capacity under the cap policy, from its cumulative distribution.
pub fn capacity_dist(stay: &Pmf, eta: usize, gamma: usize) -> Pmf {
    debug_assert!(eta >= 1 && eta <= gamma);
    let cdf: Vec<f64> = (0..=eta)
        .map(|k| {
            if k >= eta {
                1.0
            } else {
                1.0 - stay.cdf(gamma as i64 - k as i64 - 1)
            }
        })
        .collect();
    Pmf::from_cdf(&cdf)
}

/// Boarders `min(Z, C)` for independent queue and capacity.
pub fn board_dist(z: &Pmf, capacity: &Pmf) -> Pmf {
    let bound = z.bound().min(capacity.bound());
    let cdf: Vec<f64> = (0..=bound as i64)
        .map(|k| 1.0 - capacity.tail(k) * z.tail(k))
        .collect();
    Pmf::from_cdf(&cdf)
}

/// Riders leaving the station. For a stable station `z` must be the
/// stationary queue found by arriving cabins; for an unstable one every
/// cabin leaves with its full capacity used and `z` is ignored.
pub fn ride_dist(z: &Pmf, stay: &Pmf, eta: usize, gamma: usize, stable: bool) -> Pmf {
    let eta_i = eta as i64;
    let cdf: Vec<f64> = (0..=gamma as i64)
        .map(|k| {
            if k >= gamma as i64 {
                return 1.0;
            }
            if !stable {
                return if k < eta_i { 0.0 } else { stay.cdf(k - eta_i) };
            }
            let lo = if k >= eta_i {
                (k - eta_i + 1).max(0)
            } else {
                0
            };
            let head = if k >= eta_i { stay.cdf(k - eta_i) } else { 0.0 };
            head + (lo..=k)
                .map(|j| z.cdf(k - j) * stay.at(j as usize))
                .sum::<f64>()
        })
        .collect();
    Pmf::from_cdf(&cdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerates the joint law of (Z, S) and applies the cap policy directly.
    fn brute_force(z: &Pmf, stay: &Pmf, eta: usize, gamma: usize) -> (Pmf, Pmf, Pmf) {
        let mut cap = vec![0.0; gamma + 1];
        let mut board = vec![0.0; gamma + 1];
        let mut ride = vec![0.0; gamma + 1];
        for (s, &ps) in stay.probs().iter().enumerate() {
            let c = eta.min(gamma - s);
            cap[c] += ps;
            for (q, &pq) in z.probs().iter().enumerate() {
                let t = q.min(c);
                board[t] += ps * pq;
                ride[s + t] += ps * pq;
            }
        }
        (
            Pmf::from_weights(cap).unwrap(),
            Pmf::from_weights(board).unwrap(),
            Pmf::from_weights(ride).unwrap(),
        )
    }

    #[test]
    fn empty_cabin_gives_full_cap() {
        assert_eq!(capacity_dist(&Pmf::delta(0), 8, 8), Pmf::delta(8));
        assert_eq!(capacity_dist(&Pmf::delta(3), 8, 8), Pmf::delta(5));
        assert_eq!(capacity_dist(&Pmf::delta(3), 4, 8), Pmf::delta(4));
    }

    #[test]
    fn board_edge_cases() {
        let cap = Pmf::new(vec![0.0, 0.2, 0.3, 0.5]).unwrap();
        assert_eq!(board_dist(&Pmf::delta(0), &cap), Pmf::delta(0));
        assert_eq!(board_dist(&Pmf::delta(10), &Pmf::delta(8)), Pmf::delta(8));
    }

    #[test]
    fn board_with_fixed_capacity_is_min() {
        let z = Pmf::new(vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let got = board_dist(&z, &Pmf::delta(2));
        let mut want = vec![0.0; 3];
        for (q, &p) in z.probs().iter().enumerate() {
            want[q.min(2)] += p;
        }
        assert!(got.total_variation(&Pmf::from_weights(want).unwrap()) < 1e-15);
    }

    #[test]
    fn unstable_full_access_leaves_full() {
        let stay = Pmf::new(vec![0.3, 0.3, 0.4]).unwrap();
        assert_eq!(ride_dist(&Pmf::delta(0), &stay, 8, 8, false), Pmf::delta(8));
    }

    #[test]
    fn nobody_waiting_rides_stayers() {
        let stay = Pmf::new(vec![0.3, 0.3, 0.4]).unwrap();
        let ride = ride_dist(&Pmf::delta(0), &stay, 8, 8, true);
        assert!(ride.total_variation(&stay) < 1e-15);
    }

    #[test]
    fn saturated_queue_matches_enumeration() {
        let gamma = 8;
        let stay = Pmf::binomial(6, 0.4);
        for eta in 1..=gamma {
            let z = Pmf::delta(gamma);
            let cap = capacity_dist(&stay, eta, gamma);
            let (bcap, bboard, bride) = brute_force(&z, &stay, eta, gamma);
            assert!(cap.total_variation(&bcap) < 1e-14);
            assert!(board_dist(&z, &cap).total_variation(&bboard) < 1e-14);
            let ride = ride_dist(&z, &stay, eta, gamma, true);
            assert!(ride.total_variation(&bride) < 1e-14, "eta={eta}");
            // with the queue always above the cap the station behaves as unstable
            let unstable = ride_dist(&z, &stay, eta, gamma, false);
            assert!(unstable.total_variation(&bride) < 1e-14);
        }
    }

    fn arb_pmf(max: usize) -> impl Strategy<Value = Pmf> {
        prop::collection::vec(0.0f64..1.0, 1..=max + 1).prop_filter_map("mass", |w| {
            (w.iter().sum::<f64>() > 1e-3).then(|| Pmf::from_weights(w).unwrap())
        })
    }

    proptest! {
        #[test]
        fn branch_form_matches_enumeration(
            gamma in 1usize..10,
            eta_frac in 0.0f64..1.0,
            z in arb_pmf(14),
            stay_w in prop::collection::vec(0.0f64..1.0, 1..10),
        ) {
            let eta = 1 + ((gamma - 1) as f64 * eta_frac).round() as usize;
            let w: Vec<f64> = stay_w.into_iter().take(gamma + 1).collect();
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let stay = Pmf::from_weights(w).unwrap();
            let cap = capacity_dist(&stay, eta, gamma);
            let (bcap, bboard, bride) = brute_force(&z, &stay, eta, gamma);
            prop_assert!(cap.total_variation(&bcap) < 1e-12);
            let board = board_dist(&z, &cap);
            prop_assert!(board.total_variation(&bboard) < 1e-12);
            let ride = ride_dist(&z, &stay, eta, gamma, true);
            prop_assert!(ride.total_variation(&bride) < 1e-12);
            prop_assert!((ride.mean() - board.mean() - stay.mean()).abs() < 1e-10);
            prop_assert!(ride.bound() <= gamma && cap.bound() <= eta);
            if eta == gamma {
                prop_assert!((cap.mean() - (gamma as f64 - stay.mean())).abs() < 1e-10);
            }
        }

        #[test]
        fn instability_dominates(
            gamma in 1usize..10,
            eta_frac in 0.0f64..1.0,
            z in arb_pmf(14),
            stay_w in prop::collection::vec(0.0f64..1.0, 1..10),
        ) {
            let eta = 1 + ((gamma - 1) as f64 * eta_frac).round() as usize;
            let w: Vec<f64> = stay_w.into_iter().take(gamma + 1).collect();
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let stay = Pmf::from_weights(w).unwrap();
            let stable = ride_dist(&z, &stay, eta, gamma, true);
            let unstable = ride_dist(&z, &stay, eta, gamma, false);
            for k in 0..=gamma as i64 {
                prop_assert!(unstable.cdf(k) <= stable.cdf(k) + 1e-12);
            }
        }
    }
}
