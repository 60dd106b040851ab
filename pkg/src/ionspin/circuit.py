"""Gate-level circuits on the nuclear-spin register.

Each ion carries two qubits: its electron spin S and the m_I = +I / -I
pair of its nucleus. In every matrix the spin-up state (m = +j) comes
first, and controlled gates act when the control is spin-up.

Text format, one gate per line (``#`` starts a comment)::

    CNOT 0 1          nuclear CNOT, control ion 0, target ion 1
    SWAPIS 0          exchange electron and nuclear qubit of ion 0
    CNOTSI 0 | CNOTIS 0
    X 0 | Z 0         nuclear Pauli gates
    ROTS 0 <axis> <angle>
    UN 1 <8 floats>   nuclear 2x2 unitary, row-major (re, im) pairs
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .quantum import SpinSpec, is_unitary

KINDS = ("X", "Z", "RotS", "CnotSI", "CnotIS", "SwapIS", "CnotNN", "UNuclear")
_TEXT_NAMES = {
    "X": "X", "Z": "Z", "ROTS": "RotS", "CNOTSI": "CnotSI", "CNOTIS": "CnotIS",
    "SWAPIS": "SwapIS", "CNOT": "CnotNN", "UN": "UNuclear",
}
_NAME_OF = {v: k for k, v in _TEXT_NAMES.items()}

PAULI_X = np.array([[0, 1], [1, 0]], complex)
PAULI_Z = np.array([[1, 0], [0, -1]], complex)
UP = np.array([[1, 0], [0, 0]], complex)
DOWN = np.array([[0, 0], [0, 1]], complex)


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: str
    ions: tuple
    axis: float = 0.0
    angle: float = 0.0
    unitary: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "ions", tuple(int(i) for i in self.ions))
        want = 2 if self.kind == "CnotNN" else 1
        if len(self.ions) != want:
            raise CircuitError(f"{self.kind} takes {want} ion index(es)")
        if self.kind == "CnotNN" and self.ions[0] == self.ions[1]:
            raise CircuitError("CNOT control and target must differ")
        if self.kind == "UNuclear":
            u = np.asarray(self.unitary, complex)
            if u.shape != (2, 2) or not is_unitary(u):
                raise CircuitError("UNuclear payload must be a 2x2 unitary")
            object.__setattr__(self, "unitary", u)

    def check(self, n_ions: int):
        if any(i < 0 or i >= n_ions for i in self.ions):
            raise CircuitError(f"{self.kind} on ions {self.ions} outside a {n_ions}-ion register")

    def to_text(self) -> str:
        name = _NAME_OF[self.kind]
        args = [str(i) for i in self.ions]
        if self.kind == "RotS":
            args += [repr(float(self.axis)), repr(float(self.angle))]
        elif self.kind == "UNuclear":
            for z in self.unitary.ravel():
                args += [repr(float(z.real)), repr(float(z.imag))]
        return " ".join([name] + args)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "ions": list(self.ions)}
        if self.kind == "RotS":
            d.update(axis=float(self.axis), angle=float(self.angle))
        if self.kind == "UNuclear":
            d["unitary"] = [[[float(z.real), float(z.imag)] for z in row] for row in self.unitary]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        u = d.get("unitary")
        if u is not None:
            u = np.array([[complex(re, im) for re, im in row] for row in u])
        return cls(d["kind"], tuple(d["ions"]), d.get("axis", 0.0), d.get("angle", 0.0), u)


def parse_line(line: str) -> Gate | None:
    line = line.split("#", 1)[0].strip()
    if not line:
        return None
    tok = line.split()
    name = tok[0].upper()
    if name not in _TEXT_NAMES:
        raise CircuitError(f"unknown gate {tok[0]!r}")
    kind = _TEXT_NAMES[name]
    try:
        if kind == "CnotNN":
            return Gate(kind, (int(tok[1]), int(tok[2])))
        if kind == "RotS":
            if len(tok) != 4:
                raise CircuitError("ROTS needs ion, axis, angle")
            return Gate(kind, (int(tok[1]),), float(tok[2]), float(tok[3]))
        if kind == "UNuclear":
            vals = [float(v) for v in tok[2:]]
            if len(vals) != 8:
                raise CircuitError("UN needs 8 floats")
            u = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
            return Gate(kind, (int(tok[1]),), unitary=u.reshape(2, 2))
        if len(tok) != 2:
            raise CircuitError(f"{name} takes one ion index")
        return Gate(kind, (int(tok[1]),))
    except (IndexError, ValueError) as exc:
        if isinstance(exc, CircuitError):
            raise
        raise CircuitError(f"cannot parse {line!r}: {exc}") from exc


def parse_text(text: str) -> list[Gate]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        try:
            g = parse_line(line)
        except CircuitError as exc:
            raise CircuitError(f"line {lineno}: {exc}") from None
        if g is not None:
            out.append(g)
    return out


def parse_json(text: str) -> list[Gate]:
    data = json.loads(text)
    gates = data["gates"] if isinstance(data, dict) else data
    return [Gate.from_dict(g) for g in gates]


def load_circuit(path) -> list[Gate]:
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith(("{", "[")):
        return parse_json(text)
    return parse_text(text)


def to_text(gates) -> str:
    return "".join(g.to_text() + "\n" for g in gates)


def to_json(gates) -> str:
    return json.dumps({"gates": [g.to_dict() for g in gates]}, indent=2)


# ---- ideal target unitaries on the truncated register ------------------------

def qubit_layout(n_ions: int) -> list[SpinSpec]:
    """Truncated register: two-level S and nuclear qubit per ion."""
    out = []
    for i in range(n_ions):
        out += [SpinSpec(f"S{i}", Fraction(1, 2)), SpinSpec(f"Iq{i}", Fraction(1, 2))]
    return out


def slot_s(ion: int) -> int:
    return 2 * ion


def slot_i(ion: int) -> int:
    return 2 * ion + 1


def kron_slots(n_slots: int, ops: dict) -> np.ndarray:
    """Tensor product of 2x2 ``ops`` on given slots, identity elsewhere."""
    out = np.ones((1, 1), complex)
    for s in range(n_slots):
        out = np.kron(out, ops.get(s, np.eye(2)))
    return out


def controlled(n_slots: int, control: int, target: int, op: np.ndarray) -> np.ndarray:
    return kron_slots(n_slots, {control: UP, target: op}) + kron_slots(n_slots, {control: DOWN})


def rotation(axis: float, angle: float) -> np.ndarray:
    """exp(-i angle (cos(axis) X + sin(axis) Y) / 2)."""
    n = math.cos(axis) * PAULI_X + math.sin(axis) * np.array([[0, -1j], [1j, 0]])
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * n


def swap_slots(n_slots: int, a: int, b: int) -> np.ndarray:
    return controlled(n_slots, a, b, PAULI_X) @ controlled(n_slots, b, a, PAULI_X) @ controlled(n_slots, a, b, PAULI_X)


def gate_unitary(gate: Gate, n_ions: int) -> np.ndarray:
    gate.check(n_ions)
    n = 2 * n_ions
    i = gate.ions[0]
    k = gate.kind
    if k == "X":
        return kron_slots(n, {slot_i(i): PAULI_X})
    if k == "Z":
        return kron_slots(n, {slot_i(i): PAULI_Z})
    if k == "RotS":
        return kron_slots(n, {slot_s(i): rotation(gate.axis, gate.angle)})
    if k == "CnotSI":
        return controlled(n, slot_s(i), slot_i(i), PAULI_X)
    if k == "CnotIS":
        return controlled(n, slot_i(i), slot_s(i), PAULI_X)
    if k == "SwapIS":
        return swap_slots(n, slot_s(i), slot_i(i))
    if k == "CnotNN":
        return controlled(n, slot_i(i), slot_i(gate.ions[1]), PAULI_X)
    if k == "UNuclear":
        return kron_slots(n, {slot_i(i): gate.unitary})
    raise CircuitError(f"unknown gate kind {k!r}")


def target_unitary(gates, n_ions: int) -> np.ndarray:
    u = np.eye(4**n_ions, dtype=complex)
    for g in gates:
        u = gate_unitary(g, n_ions) @ u
    return u
