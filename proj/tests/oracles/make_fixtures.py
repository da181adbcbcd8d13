#!/usr/bin/env python3
"""Generate the binary test fixtures and their oracle expectations.

Everything here is written independently of the C++ code: the SMF bytes come
from the small writer below, and the expected event times for the tempo-change
fixture are computed by summing the duration of every single tick under the
tempo in force at that tick.

Run from the repository root:  python3 tests/oracles/make_fixtures.py
"""

import math
import os
import random
import struct

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(os.path.dirname(HERE), "fixtures")


def vlq(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def tempo_meta(us):
    return bytes([0xFF, 0x51, 0x03]) + us.to_bytes(3, "big")


def track_chunk(items, running_status=False):
    """items: list of (absolute_tick, bytes). Stable-sorted by tick."""
    body = bytearray()
    last = 0
    status = None
    for tick, data in sorted(items, key=lambda it: it[0]):
        body += vlq(tick - last)
        last = tick
        if running_status and data[0] < 0xF0 and data[0] == status:
            body += data[1:]
        else:
            body += data
            status = data[0] if data[0] < 0xF0 else None
    body += bytes([0x00, 0xFF, 0x2F, 0x00])
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def smf(tracks, division, running_status=False):
    fmt = 0 if len(tracks) == 1 else 1
    head = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    return head + b"".join(track_chunk(t, running_status) for t in tracks)


def note_on(ch, note, vel):
    return bytes([0x90 | ch, note, vel])


def note_off(ch, note, vel=0):
    return bytes([0x80 | ch, note, vel])


def cc(ch, num, value):
    return bytes([0xB0 | ch, num, value])


def bend(ch, value):
    return bytes([0xE0 | ch, value & 0x7F, (value >> 7) & 0x7F])


def write(name, data):
    with open(os.path.join(OUT, name), "wb") as f:
        f.write(data)


# ---------------------------------------------------------------------------
# Tempo-change fixture


def tempo_fixture():
    division = 480
    tempo_track = [
        (0, tempo_meta(500000)),
        (960, tempo_meta(400000)),
        (1500, tempo_meta(750000)),
        (1500, tempo_meta(600000)),  # same tick: the later one wins
        (3001, tempo_meta(350000)),
        (0, cc(0, 7, 100)),
    ]
    guitar = [
        (0, note_on(0, 40, 100)),
        (480, note_off(0, 40)),
        (480, note_on(1, 45, 90)),
        (959, bend(1, 9000)),
        (960, note_on(2, 50, 80)),
        (1499, note_on(3, 55, 0)),  # velocity 0: note off
        (1500, note_off(1, 45)),
        (1500, cc(0, 21, 64)),
        (2222, note_off(2, 50, 30)),
        (3000, note_on(4, 59, 127)),
        (3001, note_on(5, 64, 127)),
        (4567, bend(5, 0)),
        (7000, note_off(4, 59)),
        (7000, note_off(5, 64)),
        (12345, cc(0, 23, 127)),
    ]
    pedals = [
        (700, tempo_meta(450000)),  # tempo events in any track are global
        (1500, cc(0, 22, 127)),
        (5000, cc(0, 25, 10)),
        (12345, cc(0, 23, 0)),
    ]
    tracks = [tempo_track, guitar, pedals]
    data = smf(tracks, division, running_status=True)
    write("tempo_change.mid", data)

    tempos = []
    events = []
    for index, track in enumerate(tracks):
        ordered = sorted(enumerate(track), key=lambda it: it[1][0])
        for seq, (tick, payload) in ordered:
            if payload[0] == 0xFF:
                tempos.append((tick, index, seq, int.from_bytes(payload[3:6], "big")))
            else:
                events.append((tick, index, seq, payload))
    tempos.sort(key=lambda t: (t[0], t[1], t[2]))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    # Brute force: add up every tick's duration one at a time.
    last_tick = max(e[0] for e in events)
    tick_start = [0.0] * (last_tick + 1)
    elapsed = 0.0
    current = 500000
    ti = 0
    for tick in range(last_tick + 1):
        while ti < len(tempos) and tempos[ti][0] <= tick:
            current = tempos[ti][3]
            ti += 1
        tick_start[tick] = elapsed
        elapsed += current / (1e6 * division)

    lines = []
    for tick, _, _, payload in events:
        status = payload[0] & 0xF0
        ch = payload[0] & 0x0F
        if status == 0x90 and payload[2] == 0:
            kind, d1, d2 = "NoteOff", payload[1], 0
        elif status == 0x90:
            kind, d1, d2 = "NoteOn", payload[1], payload[2]
        elif status == 0x80:
            kind, d1, d2 = "NoteOff", payload[1], payload[2]
        elif status == 0xB0:
            kind, d1, d2 = "ControlChange", payload[1], payload[2]
        else:
            kind, d1, d2 = "PitchBend", payload[1] | (payload[2] << 7), 0
        lines.append(f"{tick_start[tick]:.17g} {kind} {ch} {d1} {d2}")
    with open(os.path.join(OUT, "tempo_change.expected"), "w") as f:
        f.write("# time_seconds kind channel data1 data2 (pitch bend: value in data1)\n")
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# 10 kB raw stream with running status, real-time bytes, SysEx and damage


def stream_fixture():
    rng = random.Random(20240611)
    out = bytearray()
    while len(out) < 10240:
        r = rng.random()
        ch = rng.randrange(16)
        if r < 0.45:
            status = rng.choice([0x80, 0x90, 0xB0, 0xE0]) | ch
            out.append(status)
            for _ in range(rng.randint(1, 6)):  # running status
                out += bytes([rng.randrange(128), rng.randrange(128)])
        elif r < 0.55:
            out += bytes([rng.choice([0xC0, 0xD0]) | ch, rng.randrange(128)])
        elif r < 0.60:
            out += bytes([0xA0 | ch, rng.randrange(128), rng.randrange(128)])
        elif r < 0.66:
            out.append(0xF0)
            out += bytes(rng.randrange(128) for _ in range(rng.randint(0, 20)))
            out.append(0xF7)
        elif r < 0.72:
            kind = rng.choice([0xF1, 0xF2, 0xF3, 0xF6])
            out.append(kind)
            out += bytes(rng.randrange(128) for _ in range({0xF1: 1, 0xF2: 2, 0xF3: 1, 0xF6: 0}[kind]))
        elif r < 0.80:
            # Real-time byte in the middle of a message.
            out.append(0x90 | ch)
            out.append(rng.randrange(128))
            out.append(rng.choice([0xF8, 0xFA, 0xFC, 0xFE, 0xFF]))
            out.append(rng.randrange(128))
        elif r < 0.88:
            # Truncated message followed by a new status.
            out += bytes([0xB0 | ch, rng.randrange(128)])
        elif r < 0.94:
            out += bytes(rng.randrange(128) for _ in range(rng.randint(1, 4)))  # stray data
        else:
            out.append(rng.choice([0xF4, 0xF5, 0xF7, 0xF9, 0xFD]))
    write("stream_10k.bin", bytes(out[:10240]))


# ---------------------------------------------------------------------------
# Render scene: 30 s of guitar and a pedal automation track

DIVISION = 480
TICKS_PER_SECOND = DIVISION * 2  # 120 BPM


def sec(t):
    return int(round(t * TICKS_PER_SECOND))


def scene_fixture():
    rng = random.Random(7)
    open_strings = [40, 45, 50, 55, 59, 64]
    guitar = []
    t = 0.0
    while t < 29.0:
        strings = rng.sample(range(6), rng.randint(1, 4))
        length = rng.choice([0.5, 1.0, 1.5, 2.0])
        for s in strings:
            note = open_strings[s] + rng.randrange(0, 8)
            start = t + 0.03 * strings.index(s)
            guitar.append((sec(start), note_on(s, note, rng.randint(60, 120))))
            guitar.append((sec(start + length * 0.9), note_off(s, note)))
            if rng.random() < 0.3:
                for k in range(8):
                    guitar.append((sec(start + 0.05 * k), bend(s, 8192 + k * 300)))
                guitar.append((sec(start + 0.5), bend(s, 8192)))
        t += length
    write("scene_guitar.mid", smf([[(0, tempo_meta(500000))], guitar], DIVISION))

    pedals = [(0, cc(0, 20, 0)), (0, cc(0, 21, 0)), (0, cc(0, 25, 127)), (0, cc(0, 26, 0))]
    # Pedal A: slow triangle sweep; pedal B: faster sweep.
    for i in range(1, 1500):
        time = i * 0.02
        a = int(round(63.5 + 63.5 * math.sin(2 * math.pi * time / 11.0)))
        b = int(round(63.5 - 63.5 * math.cos(2 * math.pi * time / 4.0)))
        pedals.append((sec(time), cc(0, 20, a)))
        pedals.append((sec(time), cc(0, 21, b)))
    # Crossfade classical -> quantum over 5 s from 4 s, back from 20 s.
    for i in range(0, 101):
        pedals.append((sec(4.0 + 0.05 * i), cc(0, 25, 127 - round(1.27 * i))))
        pedals.append((sec(4.0 + 0.05 * i), cc(0, 26, round(1.27 * i))))
        pedals.append((sec(20.0 + 0.05 * i), cc(0, 25, round(1.27 * i))))
    for t in (10.0, 20.0):
        pedals += [(sec(t), cc(0, 22, 127)), (sec(t + 0.2), cc(0, 22, 0))]
    for k in range(11):
        t = 2.5 * k + 1.25
        num = 24 if k % 4 == 3 else 23
        pedals += [(sec(t), cc(0, num, 127)), (sec(t + 0.1), cc(0, num, 0))]
    write("scene_pedals.mid", smf([pedals], DIVISION))


def plus_measurement_fixture():
    # Pedal B (CC 21, Y axis) swings 0 -> 32 -> 0; with the matching config
    # sensitivity each swing is a quarter turn, taking either pole to the
    # equator before every Z measurement (CC 23).
    events = [(0, cc(0, 21, 0))]
    for i in range(5000):
        tick = 1 + i
        events += [
            (tick, cc(0, 21, 32)),
            (tick, cc(0, 23, 127)),
            (tick, cc(0, 23, 0)),
            (tick, cc(0, 21, 0)),
            (tick, cc(0, 23, 127)),
            (tick, cc(0, 23, 0)),
        ]
    write("plus_measurements.mid", smf([events], DIVISION))
    write("empty.mid", smf([[]], DIVISION))


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    tempo_fixture()
    stream_fixture()
    scene_fixture()
    plus_measurement_fixture()
