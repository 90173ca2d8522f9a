use proptest::prelude::*;
use wsn_twin::frame::MAX_PAYLOAD;
use wsn_twin::medium::{
    DeliveryReport, LossModel, Medium, RadioConfig, RadioHandle, DEFAULT_TX_CURRENT_MA,
};
use wsn_twin::{airtime_us, Address, DataRate, FailureReason, LinkFrame, RadioRole};

fn addr(n: u8) -> Address {
    Address([0xC2, 0xC2, 0xC2, 0xC2, n])
}

fn frame(channel: u8, to: Address, len: usize) -> LinkFrame {
    LinkFrame {
        channel,
        address: to,
        ack_requested: true,
        role: RadioRole::Transmitter,
        seq: 0,
        payload: vec![0x42; len],
    }
}

struct Link {
    medium: Medium,
    tx: RadioHandle,
}

fn link(p: f64, seed: u64, max_retries: u8, rate: DataRate) -> Link {
    let mut medium = Medium::new(LossModel {
        loss_probability: p,
        seed,
    })
    .unwrap();
    let tx = medium
        .register_radio(RadioConfig {
            max_retries,
            data_rate: rate,
            ..RadioConfig::new(addr(1), 76, RadioRole::Transmitter)
        })
        .unwrap();
    medium
        .register_radio(RadioConfig {
            data_rate: rate,
            ..RadioConfig::new(addr(0xE7), 76, RadioRole::Receiver)
        })
        .unwrap();
    Link { medium, tx }
}

fn run(p: f64, seed: u64, max_retries: u8, lens: &[usize]) -> Vec<DeliveryReport> {
    let mut l = link(p, seed, max_retries, DataRate::Mbps1);
    let mut t = 0;
    lens.iter()
        .map(|&len| {
            let r = l.medium.transmit(l.tx, &frame(76, addr(0xE7), len), t).unwrap();
            t = l.medium.now() + 1_000;
            r
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn report_bounds(p in 0.0f64..=1.0, seed in any::<u64>(), retries in 0u8..=15,
                     lens in proptest::collection::vec(0usize..=MAX_PAYLOAD, 1..20)) {
        for r in run(p, seed, retries, &lens) {
            prop_assert!(r.attempts >= 1 && r.attempts <= retries as u32 + 1);
            prop_assert_eq!(r.delivered, r.failure_reason.is_none());
            prop_assert_eq!(r.energy_maus, DEFAULT_TX_CURRENT_MA as u64 * r.airtime_us_total);
            if !r.delivered {
                prop_assert_eq!(r.attempts, retries as u32 + 1);
                prop_assert_eq!(r.failure_reason, Some(FailureReason::MaxRetriesExceeded));
            }
        }
    }

    #[test]
    fn same_seed_same_reports(p in 0.0f64..=1.0, seed in any::<u64>(),
                              lens in proptest::collection::vec(0usize..=MAX_PAYLOAD, 1..20)) {
        prop_assert_eq!(run(p, seed, 15, &lens), run(p, seed, 15, &lens));
    }

    #[test]
    fn airtime_monotone(len in 0usize..MAX_PAYLOAD) {
        for rate in DataRate::ALL {
            prop_assert!(airtime_us(len, rate).unwrap() < airtime_us(len + 1, rate).unwrap());
        }
        prop_assert!(airtime_us(len, DataRate::Kbps250).unwrap() > airtime_us(len, DataRate::Mbps1).unwrap());
        prop_assert!(airtime_us(len, DataRate::Mbps1).unwrap() > airtime_us(len, DataRate::Mbps2).unwrap());
    }

    #[test]
    fn overlapping_cochannel_frames_both_die(offset in 0u64..88, len in 0usize..=MAX_PAYLOAD) {
        let mut m = Medium::new(LossModel::lossless(1)).unwrap();
        let a = m.register_radio(RadioConfig { max_retries: 0, ..RadioConfig::new(addr(1), 5, RadioRole::Transmitter) }).unwrap();
        let b = m.register_radio(RadioConfig { max_retries: 0, ..RadioConfig::new(addr(2), 5, RadioRole::Transmitter) }).unwrap();
        m.register_radio(RadioConfig::new(addr(0xE7), 5, RadioRole::Receiver)).unwrap();
        m.submit(a, &frame(5, addr(0xE7), len), 0).unwrap();
        m.submit(b, &frame(5, addr(0xE7), len), offset).unwrap();
        let mut completions = Vec::new();
        while let Some(t) = m.next_event_time() {
            let out = m.step(t).unwrap();
            prop_assert!(out.deliveries.is_empty());
            completions.extend(out.completions);
        }
        prop_assert_eq!(completions.len(), 2);
        for c in completions {
            prop_assert_eq!(c.report.failure_reason, Some(FailureReason::Collision));
        }
    }
}

#[test]
fn airtime_reference_values() {
    assert_eq!(airtime_us(32, DataRate::Mbps2).unwrap(), 172);
    assert_eq!(airtime_us(32, DataRate::Kbps250).unwrap(), 8 * 172);
    assert_eq!(airtime_us(0, DataRate::Mbps1).unwrap(), 88);
}

#[test]
fn no_receiver_is_reported() {
    let mut m = Medium::new(LossModel::lossless(3)).unwrap();
    let a = m
        .register_radio(RadioConfig::new(addr(1), 10, RadioRole::Transmitter))
        .unwrap();
    m.register_radio(RadioConfig::new(addr(0xE7), 11, RadioRole::Receiver))
        .unwrap();
    let r = m.transmit(a, &frame(10, addr(0xE7), 3), 0).unwrap();
    assert!(!r.delivered);
    assert_eq!(r.failure_reason, Some(FailureReason::NoReceiverOnChannel));
}

/// Two simultaneous senders on distinct channels, each with its own
/// receiver, over every ordered channel pair.
#[test]
fn channel_isolation_exhaustive() {
    let mut pairs = 0;
    for ca in 0..=125u8 {
        for cb in (0..=125u8).filter(|&c| c != ca) {
            let mut m = Medium::new(LossModel::lossless(7)).unwrap();
            let a = m
                .register_radio(RadioConfig::new(addr(1), ca, RadioRole::Transmitter))
                .unwrap();
            let b = m
                .register_radio(RadioConfig::new(addr(2), cb, RadioRole::Transmitter))
                .unwrap();
            m.register_radio(RadioConfig::new(addr(0xA0), ca, RadioRole::Receiver))
                .unwrap();
            m.register_radio(RadioConfig::new(addr(0xB0), cb, RadioRole::Receiver))
                .unwrap();
            m.submit(a, &frame(ca, addr(0xA0), 32), 0).unwrap();
            m.submit(b, &frame(cb, addr(0xB0), 32), 0).unwrap();
            let out = m.step(m.next_event_time().unwrap()).unwrap();
            assert_eq!(out.deliveries.len(), 2, "channels {ca}/{cb}");
            assert!(out.completions.iter().all(|c| c.report.delivered && c.report.attempts == 1));
            pairs += 1;
        }
    }
    assert_eq!(pairs, 126 * 125);
}
