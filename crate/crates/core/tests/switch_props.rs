use abrsim::source::{SourceState, Window};
use abrsim::switch::{PortControl, SwitchConfig, Variant};
use abrsim::{Cell, CellKind, Rate, RmPayload, SimTime, VcId};
use proptest::prelude::*;

const LINK: Rate = Rate::mbps(155.52);

#[derive(Clone, Debug)]
enum Op {
    Data(usize),
    Frm(usize, f64),
    End(f64),
    Brm(usize, f64),
}

fn op(vcs: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..vcs).prop_map(Op::Data),
        2 => (0..vcs, 0.1f64..155.52).prop_map(|(v, c)| Op::Frm(v, c)),
        1 => (1.0f64..2000.0).prop_map(Op::End),
        2 => (0..vcs, 0.1f64..155.52).prop_map(|(v, e)| Op::Brm(v, e)),
    ]
}

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(Variant::ALL.to_vec())
}

fn script() -> impl Strategy<Value = (Variant, usize, Vec<Op>)> {
    (variant(), 1usize..8)
        .prop_flat_map(|(v, n)| (Just(v), Just(n), prop::collection::vec(op(n), 1..300)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, ..ProptestConfig::default() })]

    #[test]
    fn port_invariants_hold((variant, n, ops) in script()) {
        let cfg = SwitchConfig::with_variant(variant);
        let mut port = PortControl::new((0..n).map(VcId), &cfg, LINK).unwrap();
        let mut now = SimTime::ZERO;
        for op in ops {
            match op {
                Op::Data(v) => {
                    port.on_data_or_frm_cell(&cfg, &Cell::data(VcId(v), now, 0), now).unwrap();
                }
                Op::Frm(v, ccr) => {
                    let rm = RmPayload::new(Rate::mbps(ccr), LINK);
                    let cell = Cell::rm(VcId(v), CellKind::ForwardRm, rm, now, 0);
                    port.on_data_or_frm_cell(&cfg, &cell, now).unwrap();
                }
                Op::End(dt) => {
                    now += SimTime::from_micros(dt);
                    port.end_interval(&cfg, LINK, now);
                    prop_assert!(port.n_last() >= 1.0);
                    let mut sum = 0.0;
                    for v in 0..n {
                        let a = port.activity(VcId(v)).unwrap();
                        prop_assert!((0.0..=1.0).contains(&a));
                        sum += a;
                    }
                    if variant.uses_effective_count() {
                        prop_assert!((port.n_current() - sum).abs() <= 1e-12 * n as f64);
                        let fs = port.abr_capacity().as_mbps() / port.n_last();
                        prop_assert!((port.fair_share().as_mbps() - fs).abs() <= 1e-9);
                    }
                }
                Op::Brm(v, er) => {
                    let mut rm = RmPayload::new(Rate::mbps(50.0), Rate::mbps(er));
                    let d = port.on_brm_cell(&cfg, &mut rm, VcId(v)).unwrap();
                    prop_assert!(d.er_out <= Rate::mbps(er));
                    prop_assert!(d.er_out <= port.abr_capacity());
                    prop_assert!(d.er_out > Rate::ZERO);
                    prop_assert_eq!(rm.er, d.er_out);
                }
            }
            let seen = (0..n).filter(|&v| port.first_cell_seen(VcId(v)) == Some(true)).count();
            prop_assert_eq!(port.vcs_seen(), seen);
        }
    }

    #[test]
    fn source_rate_and_rm_cadence(
        icr in 1.0f64..155.52,
        app_cap in prop::option::of(1.0f64..155.52),
        nrm in 2u32..64,
        ers in prop::collection::vec(0.5f64..200.0, 0..20),
    ) {
        let pcr = Rate::mbps(155.52);
        let mut src = SourceState::new(
            VcId(0),
            Rate::mbps(icr),
            pcr,
            app_cap.map(Rate::mbps),
            nrm,
            vec![Window::from(SimTime::ZERO)],
        )
        .unwrap();
        for er in ers {
            src.on_brm(&RmPayload::new(Rate::mbps(10.0), Rate::mbps(er)));
            prop_assert!(src.acr() <= pcr);
            prop_assert!(src.acr() > Rate::ZERO);
        }
        let expected = app_cap.map_or(src.acr(), |c| src.acr().min(Rate::mbps(c)));
        prop_assert_eq!(src.sending_rate(), expected);

        let mut now = SimTime::ZERO;
        for i in 0..(3 * nrm as u64) {
            let cell = src.emit_next(now).unwrap();
            prop_assert_eq!(cell.kind == CellKind::ForwardRm, i % nrm as u64 == 0);
            now = src.next_emit();
        }
    }
}
