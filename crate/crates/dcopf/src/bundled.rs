use crate::case::{Bus, Generator, Line, PowerCase};

const SIX_BUS: &str = include_str!("../cases/six_bus.json");

/// Six buses, three generators, nine lines, 140 MW at each load bus and 200 MW line limits.
pub fn six_bus() -> PowerCase {
    PowerCase::from_json(SIX_BUS).expect("bundled case is valid")
}

pub const SYNTHETIC_GENERATOR_BUSES: [u32; 7] = [1, 2, 3, 6, 8, 9, 12];

/// Deterministic 57-bus meshed network with seven generators; no line limits.
pub fn synthetic_57() -> PowerCase {
    let n = 57u32;
    let buses = (1..=n)
        .map(|id| {
            let demand = if SYNTHETIC_GENERATOR_BUSES.contains(&id) {
                0.0
            } else {
                10.0 + ((id * 37) % 50) as f64
            };
            Bus { id, demand }
        })
        .collect();
    let generators = SYNTHETIC_GENERATOR_BUSES
        .iter()
        .enumerate()
        .map(|(g, &bus)| Generator {
            bus,
            cost_q: 0.004 + 0.002 * g as f64,
            cost_c: 12.0 + 3.0 * ((g * 5) % 7) as f64,
            p_min: 0.0,
            p_max: 350.0 + 50.0 * (g % 3) as f64,
        })
        .collect();
    let mut lines = Vec::new();
    for i in 1..=n {
        let j = i % n + 1;
        lines.push(Line {
            from: i,
            to: j,
            susceptance: 4.0 + (i % 7) as f64,
            limit: None,
        });
    }
    for i in (1..=n).step_by(3) {
        let j = (i + 6) % n + 1;
        lines.push(Line {
            from: i,
            to: j,
            susceptance: 3.0 + (i % 5) as f64,
            limit: None,
        });
    }
    PowerCase {
        name: "synthetic_57".into(),
        base_mva: 100.0,
        buses,
        generators,
        lines,
        slack_bus: 1,
        renewable_buses: vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_cases_validate() {
        let c = six_bus();
        assert_eq!(
            (c.buses.len(), c.generators.len(), c.lines.len()),
            (6, 3, 9)
        );
        let s = synthetic_57();
        s.validate().unwrap();
        assert_eq!(s.buses.len(), 57);
        assert!(s.total_capacity() > s.demands().iter().sum::<f64>());
    }
}
