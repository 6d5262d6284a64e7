"""Seeded message generators shared by the codec tests."""

import math
import random

from hypothesis import strategies as st

from ngb.core import Encoding, GamePhase, GameState, Header, Image, Imu, JointState, TeamInfo, Time

_TEXT = "abcxyz_019 /éß"


def _text(rng, n=12):
    return "".join(rng.choice(_TEXT) for _ in range(rng.randint(0, n)))


def _float(rng):
    return rng.choice([0.0, -0.0, 1.5, -2.25, rng.uniform(-1e6, 1e6), rng.uniform(-1, 1), 1e-300, 1e300])


def _header(rng):
    return Header(Time(rng.randint(-(2**63), 2**63 - 1)), _text(rng))


def _unit_quat(rng):
    while True:
        q = [rng.uniform(-1.0, 1.0) for _ in range(4)]
        n = math.sqrt(sum(v * v for v in q))
        if n > 1e-3:
            return tuple(v / n for v in q)


def random_image(rng):
    enc = rng.choice(list(Encoding))
    w, h = rng.randint(0, 9), rng.randint(0, 9)
    step = w * enc.bytes_per_pixel
    return Image(_header(rng), w, h, enc, step, rng.randbytes(step * h))


def random_imu(rng):
    return Imu(_header(rng), _unit_quat(rng), tuple(_float(rng) for _ in range(3)), tuple(_float(rng) for _ in range(3)))


def random_joint_state(rng):
    n = rng.randint(0, 6)
    names = tuple(_text(rng, 6) for _ in range(n))
    pos = tuple(_float(rng) for _ in range(n))
    vel = tuple(_float(rng) for _ in range(n)) if rng.random() < 0.5 else ()
    eff = tuple(_float(rng) for _ in range(n)) if rng.random() < 0.5 else ()
    return JointState(_header(rng), names, pos, vel, eff)


def random_team(rng):
    return TeamInfo(*(rng.randrange(256) for _ in range(4)))


def random_game_state(rng):
    return GameState(
        packet_number=rng.randrange(256),
        players_per_team=rng.randrange(256),
        state=rng.choice(list(GamePhase)),
        first_half=rng.random() < 0.5,
        kickoff_team=rng.randrange(256),
        secondary_state=rng.randrange(256),
        secs_remaining=rng.randint(-32768, 32767),
        secondary_time=rng.randint(-32768, 32767),
        teams=(random_team(rng), random_team(rng)),
    )


GENERATORS = {
    "Image": random_image,
    "Imu": random_imu,
    "JointState": random_joint_state,
    "GameState": random_game_state,
}


def seeded(kind, count, seed=1234):
    rng = random.Random(f"{kind}-{seed}")
    return [GENERATORS[kind](rng) for _ in range(count)]


any_message = st.sampled_from(sorted(GENERATORS)).flatmap(
    lambda kind: st.randoms(use_true_random=False).map(GENERATORS[kind])
)
