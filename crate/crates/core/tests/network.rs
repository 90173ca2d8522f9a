use std::collections::BTreeMap;

use proptest::prelude::*;
use wsn_twin::gateway::{render_lcd, Gateway, GatewayConfig, LatestTable, LCD_COLS, LCD_ROWS};
use wsn_twin::medium::RadioHandle;
use wsn_twin::nodes::{
    apply_motor_command, dht11_truth, sample_dht11, sample_flame, sample_soil, NodeId, Reading,
};
use wsn_twin::scenario::Scenario;
use wsn_twin::telemetry::TelemetryStore;
use wsn_twin::{encode_frame, encode_payload, Address, Direction, LinkFrame, MotorCommand, RadioRole};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn paper() -> Scenario {
    Scenario::paper()
}

fn direction() -> impl Strategy<Value = Direction> {
    prop_oneof![
        Just(Direction::Stop),
        Just(Direction::Forward),
        Just(Direction::Reverse)
    ]
}

fn reading() -> impl Strategy<Value = Reading> {
    prop_oneof![
        (0u16..=1023).prop_map(|adc| Reading::Flame { adc }),
        (0u16..=1023).prop_map(|adc| Reading::Soil { adc }),
        (any::<i8>(), any::<u8>()).prop_map(|(temp_c, humidity_pct)| Reading::Dht {
            temp_c,
            humidity_pct
        }),
        (any::<u8>(), direction()).prop_map(|(speed, direction)| Reading::MotorStatus {
            speed,
            direction
        }),
    ]
}

fn node_for(r: &Reading) -> NodeId {
    match r {
        Reading::Flame { .. } => NodeId::FLAME,
        Reading::Soil { .. } => NodeId::SOIL,
        Reading::Dht { .. } => NodeId::DHT,
        Reading::MotorStatus { .. } => NodeId::MOTOR,
    }
}

fn gateway() -> Gateway {
    let book = (1..=4u8)
        .map(|n| (Address([0xC2, 0xC2, 0xC2, 0xC2, n]), NodeId::new(n).unwrap()))
        .collect();
    Gateway::new(
        GatewayConfig {
            address: Address([0xE7; 5]),
            channel: 76,
            motor_node: Address([0xC2, 0xC2, 0xC2, 0xC2, 4]),
            address_book: book,
            sample_interval: 30 * 60 * 1_000_000,
            api_key: "K".into(),
            uplink_base: "http://localhost".into(),
        },
        RadioHandle(0),
    )
}

fn sensor_frame(reading: &Reading, seq: u8) -> Vec<u8> {
    encode_frame(&LinkFrame {
        channel: 76,
        address: Address([0xE7; 5]),
        ack_requested: true,
        role: RadioRole::Transmitter,
        seq,
        payload: encode_payload(&reading.to_payload()).unwrap().to_vec(),
    })
    .unwrap()
}

proptest! {
    #[test]
    fn flame_zero_outside_windows(minute in 0u64..=270) {
        let s = paper();
        let t = minute * 60_000_000;
        let adc = sample_flame(&s.profile, t).unwrap().adc;
        let inside = s.profile.flame_windows.iter().any(|w| w.contains(t));
        prop_assert_eq!(adc == 0, !inside);
    }

    #[test]
    fn dht_within_one_of_truth(second in 0u64..=16_200, seed in any::<u64>()) {
        let s = paper();
        let t = second * 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = sample_dht11(&s.profile, t, &mut rng).unwrap();
        let (temp, hum) = dht11_truth(&s.profile, t);
        prop_assert!((r.temp_c as i32 - temp).abs() <= 1);
        prop_assert!((r.humidity_pct as i32 - hum).abs() <= 1);
        prop_assert!((0..=50).contains(&r.temp_c));
        prop_assert!((20..=90).contains(&r.humidity_pct));
    }

    #[test]
    fn motor_pins_follow_last_command(cmds in proptest::collection::vec((any::<u8>(), direction()), 1..30)) {
        for (speed, direction) in cmds {
            let state = apply_motor_command(MotorCommand { speed, direction });
            let pins = (state.in3, state.in4);
            match direction {
                Direction::Forward => prop_assert_eq!(pins, (true, false)),
                Direction::Reverse => prop_assert_eq!(pins, (false, true)),
                Direction::Stop => {
                    prop_assert_eq!(pins, (false, false));
                    prop_assert_eq!(state.duty_cycle, 0.0);
                }
            }
            prop_assert!((0.0..=1.0).contains(&state.duty_cycle));
        }
    }

    #[test]
    fn lcd_shape_for_any_table(readings in proptest::collection::vec((reading(), 0u64..1_000_000), 0..12),
                               speed in any::<u8>(), dir in direction()) {
        let mut table = LatestTable::default();
        for (i, (r, at)) in readings.iter().enumerate() {
            table.update(node_for(r), *r, *at, i as u8);
        }
        let lcd = render_lcd(&table, &apply_motor_command(MotorCommand { speed, direction: dir }));
        prop_assert_eq!(lcd.rows().len(), LCD_ROWS);
        for row in lcd.rows() {
            prop_assert_eq!(row.len(), LCD_COLS);
            prop_assert!(row.bytes().all(|b| (0x20..0x7F).contains(&b)));
        }
    }

    #[test]
    fn table_time_never_decreases(updates in proptest::collection::vec((0u16..=1023, 0u64..10_000, any::<u8>()), 1..40)) {
        let mut table = LatestTable::default();
        let mut last = None;
        for (adc, at, seq) in updates {
            table.update(NodeId::SOIL, Reading::Soil { adc }, at, seq);
            let now = table.get(NodeId::SOIL).unwrap().received_at;
            if let Some(prev) = last {
                prop_assert!(now >= prev);
            }
            last = Some(now);
        }
    }

    #[test]
    fn repeated_delivery_updates_once(k in 1usize..8, r in reading(), seq in any::<u8>()) {
        let s = paper();
        let mut store = TelemetryStore::in_memory(s.clock);
        let mut gw = gateway();
        let node = node_for(&r);
        let from = Address([0xC2, 0xC2, 0xC2, 0xC2, node.index()]);
        let bytes = sensor_frame(&r, seq);
        for i in 0..k {
            gw.handle_frame(from, &bytes, 1_000 + i as u64, &mut store).unwrap();
        }
        prop_assert_eq!(gw.counters().readings_applied, 1);
        prop_assert_eq!(gw.counters().duplicates, k as u64 - 1);
        prop_assert_eq!(store.len(), 1);
    }
}

#[test]
fn soil_hits_every_knot() {
    let s = paper();
    for &(t, v) in s.profile.soil_curve.points() {
        assert_eq!(sample_soil(&s.profile, t).unwrap().adc as f64, v);
    }
}

#[test]
fn motor_pins_exhaustive() {
    for speed in 0..=255u8 {
        for direction in [Direction::Stop, Direction::Forward, Direction::Reverse] {
            let st = apply_motor_command(MotorCommand { speed, direction });
            let expected = match direction {
                Direction::Forward => (true, false, speed as f64 / 255.0),
                Direction::Reverse => (false, true, speed as f64 / 255.0),
                Direction::Stop => (false, false, 0.0),
            };
            assert_eq!((st.in3, st.in4, st.duty_cycle), expected);
        }
    }
}

#[test]
fn empty_lcd_is_placeholder_rows() {
    let lcd = render_lcd(&LatestTable::default(), &apply_motor_command(MotorCommand::STOP));
    let rows: BTreeMap<usize, &str> = lcd.rows().iter().map(String::as_str).enumerate().collect();
    assert_eq!(rows[&0], "T:---C H:---%   ");
    assert_eq!(rows[&3], "M:  0 STP       ");
}
