mod common;

use common::*;
use proptest::prelude::*;

use uphes::sim::{evaluate_schedule, simulate};

#[test]
fn thousand_random_schedules_conserve_mass_and_respect_bounds() {
    assert_eq!(checks::conservation_violation(&plant(), 1000), None);
}

#[test]
fn idle_day_at_target_settles_to_exact_zero() {
    let plant = plant();
    assert_eq!(plant.config.v_init, plant.config.v_target);
    let o = evaluate_schedule(&[0.0; 24], &day_prices(24), &plant).unwrap();
    assert_eq!((o.profit, o.si_penalty, o.vol_penalty, o.revenue, o.operating_cost), (0.0, 0.0, 0.0, 0.0, 0.0));
    assert!(o.events.is_empty());
}

#[test]
fn shortfall_costs_double_and_surplus_earns_half() {
    // 2 MWh short at 100 is charged once more on top of lost revenue; a surplus gives back half
    assert_eq!(checks::si_penalties(&plant()), (200.0, 100.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profit_is_its_decomposition(seed in 0u64..10_000) {
        let plant = plant();
        let mut r = rng(seed);
        let sched = random_schedule(&mut r, 24);
        let o = evaluate_schedule(&sched, &day_prices(24), &plant).unwrap();
        prop_assert_eq!(o.profit, o.revenue - o.operating_cost - o.si_penalty - o.vol_penalty);
        prop_assert!(o.si_penalty >= 0.0 && o.vol_penalty >= 0.0 && o.operating_cost >= 0.0);
    }

    #[test]
    fn simulation_is_bitwise_repeatable(seed in 0u64..10_000) {
        let plant = plant();
        let sched = random_schedule(&mut rng(seed), 24);
        prop_assert_eq!(simulate(&sched, &plant).unwrap(), simulate(&sched, &plant).unwrap());
    }
}
