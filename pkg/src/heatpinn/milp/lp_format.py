"""CPLEX-LP-format writer and a minimal reader for round-trip checks.

Numbers are printed with 17 significant digits so parsed models reproduce
the original coefficients exactly.  Variable names are sanitised to
[A-Za-z0-9_] and uniquified.
"""

import re

from .model import LinExpr, MilpModel

_NAME_OK = re.compile(r"[^A-Za-z0-9_]")
_TOKEN = re.compile(
    r"(?:[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)|(?:[A-Za-z_][A-Za-z0-9_]*)|(?:[<>]=?|=|\+|-|:)"
)
_SECTION = re.compile(
    r"^\s*(minimize|minimise|min|maximize|max|subject\s+to|such\s+that|st|s\.t\.|"
    r"bounds|binaries|binary|bin|general|generals|end)\s*$",
    re.IGNORECASE,
)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def sanitize_names(names) -> dict:
    """Map original names to unique LP-safe identifiers."""
    mapping: dict[str, str] = {}
    used: set[str] = set()
    for name in names:
        clean = _NAME_OK.sub("_", name)
        if not clean or clean[0].isdigit() or clean[0] == ".":
            clean = "v_" + clean
        candidate = clean
        k = 1
        while candidate in used:
            candidate = f"{clean}_{k}"
            k += 1
        mapping[name] = candidate
        used.add(candidate)
    return mapping


def _expr_lines(terms: dict, const: float, mapping: dict, label: str) -> list[str]:
    parts = []
    for name, coef in terms.items():
        parts.append(f"{'+' if coef >= 0 else '-'} {_fmt(abs(coef))} {mapping[name]}")
    if const != 0.0:
        parts.append(f"{'+' if const >= 0 else '-'} {_fmt(abs(const))}")
    if not parts:
        parts = ["+ 0"]
    lines = []
    chunk = f" {label}:"
    for i, part in enumerate(parts):
        if i and i % 8 == 0:
            lines.append(chunk)
            chunk = "   "
        chunk += " " + part
    lines.append(chunk)
    return lines


def export_lp(model: MilpModel) -> str:
    """Serialise the model in CPLEX LP format (minimisation)."""
    mapping = sanitize_names(v.name for v in model.variables)
    out = [f"\\ {model.name}", "Minimize"]
    out += _expr_lines(model.objective.terms, model.objective.const, mapping, "obj")
    out.append("Subject To")
    for con in model.constraints:
        rel = {"<=": "<=", "=": "=", ">=": ">="}[con.relation]
        lines = _expr_lines(con.terms, 0.0, mapping, con.name)
        lines[-1] += f" {rel} {_fmt(con.rhs)}"
        out += lines
    out.append("Bounds")
    for v in model.variables:
        out.append(f" {_fmt(v.lb)} <= {mapping[v.name]} <= {_fmt(v.ub)}")
    binaries = [mapping[v.name] for v in model.variables if v.is_binary]
    if binaries:
        out.append("Binaries")
        for i in range(0, len(binaries), 10):
            out.append(" " + " ".join(binaries[i : i + 10]))
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(path, model: MilpModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(export_lp(model))


class LpParseError(ValueError):
    pass


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("\\")[0] for line in text.splitlines())


def _split_sections(text: str) -> dict:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = _SECTION.match(line)
        if m:
            word = re.sub(r"\s+", " ", m.group(1).lower())
            if word in ("minimize", "minimise", "min"):
                current = "objective"
            elif word in ("maximize", "max"):
                raise LpParseError("maximisation files are not supported")
            elif word in ("subject to", "such that", "st", "s.t."):
                current = "constraints"
            elif word == "bounds":
                current = "bounds"
            elif word in ("binaries", "binary", "bin"):
                current = "binaries"
            elif word in ("general", "generals"):
                current = "generals"
            else:
                current = "end"
            sections.setdefault(current, [])
            continue
        if current and line.strip():
            sections[current].append(line)
    return sections


_NUM = re.compile(r"[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?")


def _parse_terms(tokens: list) -> tuple[dict, float]:
    """Accumulate `sign coef name` trios; numbers without a name are constants."""
    terms: dict[str, float] = {}
    const = 0.0
    sign = 1.0
    coef: float | None = None
    for tok in tokens:
        if tok in ("+", "-"):
            if coef is not None:
                const += sign * coef
                coef = None
            sign = 1.0 if tok == "+" else -1.0
        elif _NUM.fullmatch(tok):
            if coef is not None:
                const += sign * coef
                sign = 1.0
            coef = float(tok)
        else:
            terms[tok] = terms.get(tok, 0.0) + sign * (coef if coef is not None else 1.0)
            sign, coef = 1.0, None
    if coef is not None:
        const += sign * coef
    return terms, const


def _tokenize(text: str) -> list:
    return _TOKEN.findall(text)


def _merge_signs(tokens: list) -> list:
    """Fold standalone +/- tokens into the following numeric literal."""
    out = []
    i = 0
    while i < len(tokens):
        if tokens[i] in ("+", "-") and i + 1 < len(tokens) and _NUM.fullmatch(tokens[i + 1]):
            out.append(tokens[i] + tokens[i + 1])
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


def parse_lp(text: str) -> MilpModel:
    """Parse LP text produced by :func:`export_lp` (and simple variants)."""
    sections = _split_sections(_strip_comments(text))
    if "objective" not in sections:
        raise LpParseError("missing objective section")

    obj_tokens = _tokenize(" ".join(sections["objective"]))
    if ":" in obj_tokens:
        obj_tokens = obj_tokens[obj_tokens.index(":") + 1 :]
    obj_terms, obj_const = _parse_terms(obj_tokens)

    constraints = []
    lines = sections.get("constraints", [])
    blocks: list[list[str]] = []
    for line in lines:
        if re.match(r"^\s*[A-Za-z_][A-Za-z0-9_]*\s*:", line) or not blocks:
            blocks.append([line])
        else:
            blocks[-1].append(line)
    for block in blocks:
        tokens = _tokenize(" ".join(block))
        name = None
        if ":" in tokens:
            cut = tokens.index(":")
            name = tokens[cut - 1] if cut else None
            tokens = tokens[cut + 1 :]
        rel_pos = next((i for i, t in enumerate(tokens) if t in ("<=", ">=", "=", "<", ">")), None)
        if rel_pos is None:
            raise LpParseError(f"constraint without relation: {' '.join(block)!r}")
        rel = {"<": "<=", ">": ">="}.get(tokens[rel_pos], tokens[rel_pos])
        lhs_terms, lhs_const = _parse_terms(tokens[:rel_pos])
        rhs_terms, rhs_const = _parse_terms(tokens[rel_pos + 1 :])
        if rhs_terms:
            raise LpParseError("variables on constraint right-hand side are not supported")
        constraints.append((name, lhs_terms, rel, rhs_const - lhs_const))

    bounds: dict[str, tuple[float, float]] = {}
    for line in sections.get("bounds", []):
        tokens = _merge_signs(_tokenize(line))
        if not tokens:
            continue
        if len(tokens) == 2 and tokens[1].lower() == "free":
            raise LpParseError("free variables are not supported (finite bounds required)")
        if len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
            bounds[tokens[2]] = (float(tokens[0]), float(tokens[4]))
        elif len(tokens) == 3 and tokens[1] == "<=":
            name = tokens[0] if re.match(r"[A-Za-z_]", tokens[0]) else tokens[2]
            if name == tokens[2]:
                bounds[name] = (float(tokens[0]), bounds.get(name, (0.0, 0.0))[1])
            else:
                bounds[name] = (bounds.get(name, (0.0, 0.0))[0], float(tokens[2]))
        elif len(tokens) == 3 and tokens[1] == ">=":
            bounds[tokens[0]] = (float(tokens[2]), bounds.get(tokens[0], (0.0, 0.0))[1])
        elif len(tokens) == 3 and tokens[1] == "=":
            v = float(tokens[2])
            bounds[tokens[0]] = (v, v)
        else:
            raise LpParseError(f"unsupported bounds line: {line!r}")

    binaries = set()
    for line in sections.get("binaries", []):
        binaries.update(_tokenize(line))

    names: list[str] = []
    seen = set()
    def note(name):
        if name not in seen:
            seen.add(name)
            names.append(name)
    for name in obj_terms:
        note(name)
    for _, terms, _, _ in constraints:
        for name in terms:
            note(name)
    for name in bounds:
        note(name)
    for name in binaries:
        note(name)

    model = MilpModel("parsed")
    for name in names:
        if name in bounds:
            lo, hi = bounds[name]
        elif name in binaries:
            lo, hi = 0.0, 1.0
        else:
            raise LpParseError(f"variable {name!r} lacks finite bounds")
        model.add_var(name, lo, hi, binary=name in binaries)
    for cname, terms, rel, rhs in constraints:
        model.add_constraint(LinExpr(terms), rel, rhs, name=cname)
    model.set_objective(LinExpr(obj_terms, obj_const))
    return model


def read_lp(path) -> MilpModel:
    with open(path, encoding="utf-8") as fh:
        return parse_lp(fh.read())
