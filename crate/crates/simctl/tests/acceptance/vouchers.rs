use std::sync::Arc;

use parkchain_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

const CHANNELS: u32 = 40;
const OPS_PER_CHANNEL: usize = 260;
const DRIVERS: u64 = 4;

#[derive(Debug, Clone, Copy)]
enum Attack {
    Honest,
    Fresh,
    BitFlip,
    Replay,
    Decrease,
    CrossChannel,
    ForeignKey,
    OverLocked,
}

const ATTACKS: [Attack; 8] = [
    Attack::Honest,
    Attack::Fresh,
    Attack::BitFlip,
    Attack::Replay,
    Attack::Decrease,
    Attack::CrossChannel,
    Attack::ForeignKey,
    Attack::OverLocked,
];

fn flip(v: &Voucher, rng: &mut ChaCha8Rng) -> Voucher {
    let mut wire = v.to_wire();
    let bit = rng.gen_range(0..wire.len() * 8);
    wire[bit / 8] ^= 1 << (bit % 8);
    Voucher::from_wire(&wire).expect("length unchanged")
}

struct World {
    engine: Engine,
    landlord: Address,
    lot: LotId,
    drivers: Vec<(Address, KeyPair)>,
    intruder: KeyPair,
}

fn world() -> World {
    let mut ledger = Ledger::new();
    let mut account = |n: u64| {
        let seed = Seed::derive(0xad, &format!("{n}"));
        (ledger.create_account(&seed, Funds(10_000_000)).unwrap(), KeyPair::from_seed(&seed))
    };
    let (admin, _) = account(0);
    let (landlord, _) = account(1);
    let drivers: Vec<_> = (0..DRIVERS).map(|i| account(2 + i)).collect();
    let intruder = KeyPair::from_seed(&Seed::derive(0xad, "intruder"));
    let mut engine = Engine::new(ledger, admin, EngineConfig { grace: 3600 }).unwrap();
    let terms = LandlordTerms {
        tax_rate: 500,
        land_info: String::new(),
        valid_from: TimePoint(0),
        valid_until: TimePoint(1 << 40),
    };
    let r = engine.request_landlord_registration(&landlord, terms).unwrap();
    let contract = engine.decide_registration(&admin, r, true).unwrap().unwrap();
    let p = engine.deploy_policy(&landlord, Arc::new(WeekHourPolicy::uniform(3_600))).unwrap();
    let lot = engine.create_parking_lot(&landlord, contract, CHANNELS, p, "").unwrap();
    World { engine, landlord, lot, drivers, intruder }
}

#[derive(Default)]
struct Tally {
    ops: usize,
    accepted: usize,
    invalid_accepted: usize,
    valid_rejected: usize,
    engine_attacks: usize,
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    let mut w = world();
    let mut t = Tally::default();

    let mut opened = Vec::new();
    for n in 0..CHANNELS {
        let (payer, _) = w.drivers[n as usize % w.drivers.len()];
        let car = w.engine.register_car(&payer, &format!("FZ-{n}")).unwrap();
        let req = OpenChannel {
            car,
            provider: ProviderId::Lot(w.lot),
            stall: n,
            until: TimePoint(w.engine.now().0 + 4 * 3600),
            deposit: Funds(rng.gen_range(14_400..=30_000)),
            sp: None,
        };
        opened.push((n as usize % w.drivers.len(), w.engine.open_channel(&payer, req).unwrap()));
    }

    for (c, &(d, id)) in opened.iter().enumerate() {
        let (payer, ref keys) = w.drivers[d];
        let ch = w.engine.channel(&id).unwrap().clone();
        let locked = ch.locked.0;
        let other = opened[(c + 1) % opened.len()].1;
        let mut payer_side = w.engine.open_session(&id).unwrap();
        let mut payee = payer_side.clone();
        let mut seen: Vec<Voucher> = Vec::new();
        let mut max_accepted = 0u64;
        let mut clock = ch.opened_at.0;

        for _ in 0..OPS_PER_CHANNEL {
            let attack = ATTACKS[rng.gen_range(0..ATTACKS.len())];
            let above = |rng: &mut ChaCha8Rng| rng.gen_range(max_accepted + 1..=locked.max(max_accepted + 1));
            let (v, authentic) = match attack {
                Attack::Honest => {
                    clock += rng.gen_range(0..900);
                    (payer_side.next_voucher(&ch, keys, TimePoint(clock)).unwrap(), true)
                }
                Attack::Fresh => (sign_voucher(keys, id, Funds(above(&mut rng))), true),
                Attack::BitFlip => {
                    let base = sign_voucher(keys, id, Funds(above(&mut rng)));
                    (flip(&base, &mut rng), false)
                }
                Attack::Replay => match seen.last() {
                    Some(v) => (*v, true),
                    None => continue,
                },
                Attack::Decrease => (sign_voucher(keys, id, Funds(rng.gen_range(0..=max_accepted))), true),
                Attack::CrossChannel => (sign_voucher(keys, other, Funds(above(&mut rng))), true),
                Attack::ForeignKey => (sign_voucher(&w.intruder, id, Funds(above(&mut rng))), true),
                Attack::OverLocked => {
                    let c = rng.gen_range(locked + 1..=locked.saturating_mul(2).max(locked + 1));
                    (sign_voucher(keys, id, Funds(c)), true)
                }
            };
            let signed_by_payer = authentic && !matches!(attack, Attack::ForeignKey);
            let valid = signed_by_payer
                && v.channel_id == id
                && v.cumulative.0 > max_accepted
                && v.cumulative.0 <= locked;
            let accepted = payee.accept_voucher(&v);
            t.ops += 1;
            match (accepted, valid) {
                (true, true) => {
                    t.accepted += 1;
                    max_accepted = v.cumulative.0;
                    seen.push(v);
                }
                (true, false) => t.invalid_accepted += 1,
                (false, true) => t.valid_rejected += 1,
                (false, false) => {}
            }
        }
        ensure!(
            payee.last_accepted().0 == max_accepted,
            "channel {c}: payee holds {} but the highest valid voucher was {max_accepted}",
            payee.last_accepted().0
        );

        let before = (w.engine.ledger().snapshot(), w.engine.ledger().events().len());
        if let Some(best) = payee.best_voucher().copied() {
            let forged = [
                flip(&best, &mut rng),
                sign_voucher(&w.intruder, id, best.cumulative),
                sign_voucher(keys, id, Funds(locked + 1)),
            ];
            for v in forged {
                t.engine_attacks += 1;
                ensure!(w.engine.settle_channel(&w.landlord, &v).is_err(), "channel {c}: forged settlement went through");
            }
            t.engine_attacks += 1;
            ensure!(w.engine.settle_channel(&payer, &best).is_err(), "channel {c}: payer settled as payee");
        }
        ensure!(
            (w.engine.ledger().snapshot(), w.engine.ledger().events().len()) == before,
            "channel {c}: a refused settlement touched the ledger"
        );

        let Some(best) = payee.best_voucher().copied() else { continue };
        let payer_before = w.engine.ledger().balance(&payer).unwrap().0;
        let b = w.engine.settle_channel(&w.landlord, &best).map_err(|e| format!("channel {c}: {e}"))?;
        let paid = payer_before + locked - w.engine.ledger().balance(&payer).unwrap().0;
        let credited = b.tax.0 + b.service.0 + b.landlord.0 + b.operator.0;
        ensure!(
            credited <= max_accepted && credited == b.claimed.0 && b.claimed.0 == max_accepted && paid == credited,
            "channel {c}: payee side credited {credited}, payer paid {paid}, best accepted {max_accepted}"
        );
        t.engine_attacks += 1;
        ensure!(w.engine.settle_channel(&w.landlord, &best).is_err(), "channel {c}: settled twice");
    }

    ensure!(w.engine.ledger().is_conserved(), "ledger not conserved");
    ensure!(t.ops >= 10_000, "only {} voucher operations", t.ops);
    ensure!(t.invalid_accepted == 0, "{} invalid vouchers accepted", t.invalid_accepted);
    ensure!(t.valid_rejected == 0, "{} valid vouchers rejected", t.valid_rejected);
    ensure!(t.accepted > 0, "no voucher was ever accepted");
    Ok(format!(
        "{} off-chain ops ({} accepted, 0 invalid accepted), {} forged settlements refused",
        t.ops, t.accepted, t.engine_attacks
    ))
}
