"""Brute-force reference model of the zone state machine.

A direct, independent transcription of the lifecycle diagram and admission
rules: plain dicts, slot counts recomputed by scanning all zones on every
query, no shared code with the package under test.
"""

from __future__ import annotations


class RefZns:
    def __init__(self, zone_size, zone_cap, num_zones, max_open, max_active):
        self.size = zone_size
        self.cap = zone_cap
        self.n = num_zones
        self.max_open = max_open
        self.max_active = max_active
        self.zones = [{"state": "empty", "wp": 0, "finished": False}
                      for _ in range(num_zones)]

    def open_count(self):
        return sum(z["state"] in ("implicit_open", "explicit_open")
                   for z in self.zones)

    def active_count(self):
        return sum(z["state"] in ("implicit_open", "explicit_open", "closed")
                   for z in self.zones)

    def _implicit_open(self, z):
        if z["state"] == "empty":
            if self.active_count() >= self.max_active:
                return "too_many_active_zones"
            if self.open_count() >= self.max_open:
                return "too_many_open_zones"
            z["state"] = "implicit_open"
        elif z["state"] == "closed":
            if self.open_count() >= self.max_open:
                return "too_many_open_zones"
            z["state"] = "implicit_open"
        return None

    def write(self, zone_id, lba, nblocks):
        if not 0 <= zone_id < self.n:
            return "bounds_exceeded"
        z = self.zones[zone_id]
        if z["state"] == "full":
            return "zone_full"
        if lba != zone_id * self.size + z["wp"]:
            return "unaligned_write"
        if z["wp"] + nblocks > self.cap:
            return "bounds_exceeded"
        err = self._implicit_open(z)
        if err:
            return err
        z["wp"] += nblocks
        if z["wp"] == self.cap:
            z["state"] = "full"
        return "ok"

    def append(self, zone_id, nblocks):
        if not 0 <= zone_id < self.n:
            return "bounds_exceeded"
        z = self.zones[zone_id]
        if z["state"] == "full":
            return "zone_full"
        if z["wp"] + nblocks > self.cap:
            return "bounds_exceeded"
        err = self._implicit_open(z)
        if err:
            return err
        assigned = zone_id * self.size + z["wp"]
        z["wp"] += nblocks
        if z["wp"] == self.cap:
            z["state"] = "full"
        return ("ok", assigned)

    def read(self, lba, nblocks):
        if lba < 0 or lba + nblocks > self.n * self.size:
            return "bounds_exceeded"
        written = all(
            (b % self.size) < self.zones[b // self.size]["wp"]
            for b in range(lba, lba + nblocks))
        return ("ok", not written)

    def manage(self, zone_id, action):
        if not 0 <= zone_id < self.n:
            return "bounds_exceeded"
        z = self.zones[zone_id]
        if action == "open":
            if z["state"] not in ("empty", "closed"):
                return "invalid_transition"
            if z["state"] == "empty":
                if self.active_count() >= self.max_active:
                    return "too_many_active_zones"
                if self.open_count() >= self.max_open:
                    return "too_many_open_zones"
            else:
                if self.open_count() >= self.max_open:
                    return "too_many_open_zones"
            z["state"] = "explicit_open"
            return "ok"
        if action == "close":
            if z["state"] not in ("implicit_open", "explicit_open"):
                return "invalid_transition"
            z["state"] = "closed"
            return "ok"
        if action == "finish":
            if z["state"] in ("empty", "full"):
                return "invalid_transition"
            z["finished"] = z["wp"] < self.cap
            z["state"] = "full"
            return "ok"
        if action == "reset":
            z["state"] = "empty"
            z["wp"] = 0
            z["finished"] = False
            return "ok"
        raise ValueError(action)

    def snapshot(self):
        return (tuple((z["state"], z["wp"], z["finished"])
                      for z in self.zones),
                self.open_count(), self.active_count())
