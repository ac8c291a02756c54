#!/usr/bin/env python3
"""Standalone export of an AI chain project.

The chain is embedded below as data and executed by this bundled minimal
runtime.  End-user output (the Output window) goes to stdout; console logs
go to stderr.  Mock engines read their script from ``--mock``; remote
engines need network access and an API key in the environment variable
named by their configuration.

Usage:
    python this_script.py [--mock script.json] [--input VALUE]...
"""

import argparse
import json
import math
import os
import re
import sys
import urllib.error
import urllib.request

PROJECT_JSON = "__EMBED_PROJECT_JSON__"

WHILE_CAP = 10000
IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
ASPECTS = ("context", "instruction", "examples", "output_formatter")


class ChainFailure(Exception):
    pass


# -- values -----------------------------------------------------------------


def fmt_number(num):
    if isinstance(num, int):
        return str(num)
    if float(num).is_integer():
        return str(int(num))
    return repr(num)


def as_text(value):
    tag, payload = value
    if tag == "boolean":
        return "true" if payload else "false"
    if tag == "number":
        return fmt_number(payload)
    return str(payload)


def as_number(value):
    tag, payload = value
    if tag == "number":
        return float(payload)
    if tag == "text":
        try:
            parsed = float(payload)
        except ValueError:
            return None
        return parsed if math.isfinite(parsed) else None
    return None


def truthy(value):
    tag, payload = value
    if tag == "boolean":
        return bool(payload)
    if tag == "number":
        return payload != 0
    return bool(payload)


# -- expressions --------------------------------------------------------------


def eval_expr(env, expr):
    kind = expr["kind"]
    if kind == "literal":
        return (expr["value"]["tag"], expr["value"]["payload"])
    if kind == "var":
        name = expr["name"]
        if name not in env:
            raise ChainFailure("unbound variable %r" % name)
        return env[name]
    if kind == "not":
        return ("boolean", not truthy(eval_expr(env, expr["expr"])))
    op = expr["op"]
    if op == "and":
        return ("boolean", truthy(eval_expr(env, expr["lhs"])) and truthy(eval_expr(env, expr["rhs"])))
    if op == "or":
        return ("boolean", truthy(eval_expr(env, expr["lhs"])) or truthy(eval_expr(env, expr["rhs"])))
    lhs = eval_expr(env, expr["lhs"])
    rhs = eval_expr(env, expr["rhs"])
    if op == "contains":
        return ("boolean", as_text(rhs) in as_text(lhs))
    ln, rn = as_number(lhs), as_number(rhs)
    if op in ("<", "<=", ">", ">="):
        if ln is None or rn is None:
            raise ChainFailure("non-numeric operand to ordering comparison %r" % op)
        result = {"<": ln < rn, "<=": ln <= rn, ">": ln > rn, ">=": ln >= rn}[op]
        return ("boolean", result)
    if op in ("==", "!="):
        equal = ln == rn if (ln is not None and rn is not None) else as_text(lhs) == as_text(rhs)
        return ("boolean", equal if op == "==" else not equal)
    if op == "+":
        if ln is not None and rn is not None:
            total = ln + rn
            if not math.isfinite(total):
                raise ChainFailure("numeric overflow in addition")
            return ("number", total)
        return ("text", as_text(lhs) + as_text(rhs))
    raise ChainFailure("unknown operator %r" % op)


# -- expression parsing (code-exec engines) -----------------------------------

TOKEN = re.compile(
    r"""\s*(?:
        (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
      | (?P<string>"[^"]*"|'[^']*')
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>==|!=|<=|>=|<|>|\+|\(|\))
    )""",
    re.VERBOSE,
)


def tokenize(text):
    tokens, pos = [], 0
    while pos < len(text):
        match = TOKEN.match(text, pos)
        if match is None:
            if not text[pos:].strip():
                break
            raise ChainFailure("bad expression near %r" % text[pos:])
        pos = match.end()
        for group, token in match.groupdict().items():
            if token is not None:
                tokens.append((group, token))
    return tokens


def parse_expr(text):
    tokens = tokenize(text)
    if not tokens:
        raise ChainFailure("empty expression")
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take():
        token = peek()
        if token is None:
            raise ChainFailure("unexpected end of expression")
        pos[0] += 1
        return token

    def keyword(word):
        if peek() == ("ident", word):
            take()
            return True
        return False

    def or_expr():
        node = and_expr()
        while keyword("or"):
            node = {"kind": "binary", "op": "or", "lhs": node, "rhs": and_expr()}
        return node

    def and_expr():
        node = not_expr()
        while keyword("and"):
            node = {"kind": "binary", "op": "and", "lhs": node, "rhs": not_expr()}
        return node

    def not_expr():
        if keyword("not"):
            return {"kind": "not", "expr": not_expr()}
        return cmp_expr()

    def cmp_expr():
        node = add_expr()
        token = peek()
        if token is not None and (
            (token[0] == "op" and token[1] in ("==", "!=", "<", "<=", ">", ">="))
            or token == ("ident", "contains")
        ):
            take()
            return {"kind": "binary", "op": token[1], "lhs": node, "rhs": add_expr()}
        return node

    def add_expr():
        node = primary()
        while peek() == ("op", "+"):
            take()
            node = {"kind": "binary", "op": "+", "lhs": node, "rhs": primary()}
        return node

    def primary():
        group, token = take()
        if group == "number":
            number = float(token)
            payload = int(number) if number.is_integer() else number
            return {"kind": "literal", "value": {"tag": "number", "payload": payload}}
        if group == "string":
            return {"kind": "literal", "value": {"tag": "text", "payload": token[1:-1]}}
        if group == "ident":
            if token == "true":
                return {"kind": "literal", "value": {"tag": "boolean", "payload": True}}
            if token == "false":
                return {"kind": "literal", "value": {"tag": "boolean", "payload": False}}
            if token in ("and", "or", "not", "contains"):
                raise ChainFailure("unexpected keyword %r" % token)
            return {"kind": "var", "name": token}
        if token == "(":
            node = or_expr()
            if take() != ("op", ")"):
                raise ChainFailure("expected ')'")
            return node
        raise ChainFailure("unexpected token %r" % token)

    node = or_expr()
    if peek() is not None:
        raise ChainFailure("trailing input in expression")
    return node


# -- prompt rendering ----------------------------------------------------------


def scan_placeholders(text):
    spans, pos = [], 0
    while True:
        start = text.find("{{", pos)
        if start < 0:
            return spans
        if text.startswith("{{{{", start):
            spans.append((None, start, start + 4))
            pos = start + 4
            continue
        end = text.find("}}", start + 2)
        if end < 0:
            raise ChainFailure("unbalanced placeholder braces")
        name = text[start + 2 : end]
        if IDENT.fullmatch(name) is None:
            raise ChainFailure("invalid placeholder name %r" % name)
        spans.append((name, start, end + 2))
        pos = end + 2


def template_placeholders(template):
    seen = []
    for aspect in ASPECTS:
        text = template.get(aspect)
        if text:
            for name, _, _ in scan_placeholders(text):
                if name is not None and name not in seen:
                    seen.append(name)
    return seen


def render_aspect(text, bindings):
    parts, pos = [], 0
    for name, start, end in scan_placeholders(text):
        parts.append(text[pos:start])
        if name is None:
            parts.append("{{")
        elif name in bindings:
            parts.append(as_text(bindings[name]))
        else:
            raise ChainFailure("no binding for placeholder %r" % name)
        pos = end
    parts.append(text[pos:])
    return "".join(parts)


def render_template(template, bindings):
    rendered = []
    for aspect in ASPECTS:
        text = template.get(aspect)
        if text:
            rendered.append(render_aspect(text, bindings))
    return "\n\n".join(rendered)


# -- engines -------------------------------------------------------------------


def http_json(url, body, api_key_env):
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(api_key_env or "", "")
    if key:
        headers["Authorization"] = "Bearer " + key
    request = urllib.request.Request(url, json.dumps(body).encode("utf-8"), headers)
    try:
        with urllib.request.urlopen(request, timeout=60) as response:
            return json.loads(response.read().decode("utf-8"))
    except urllib.error.URLError as exc:
        raise ChainFailure("engine request failed: %s" % exc)


def invoke_engine(engine, prompt, mock_script):
    kind = engine["kind"]
    if kind == "mock":
        if mock_script is None:
            raise ChainFailure("mock engine %r needs --mock" % engine["name"])
        for rule in mock_script.get("rules", []):
            if rule["match"] in prompt:
                return ("text", rule["response"])
        return ("text", mock_script.get("default", ""))
    if kind == "code-exec":
        return ("text", as_text(eval_expr({}, parse_expr(prompt))))
    base = (engine.get("endpoint") or "https://api.openai.com/v1").rstrip("/")
    params = engine.get("params", {})
    sampling = {
        "temperature": params.get("temperature", 1.0),
        "max_tokens": params.get("max_length", 512),
        "top_p": params.get("top_p", 1.0),
        "frequency_penalty": params.get("frequency_penalty", 0.0),
        "presence_penalty": params.get("presence_penalty", 0.0),
    }
    key_env = engine.get("api_key_env")
    if kind == "chat":
        body = {"model": engine["model_id"], "messages": [{"role": "user", "content": prompt}]}
        body.update(sampling)
        payload = http_json(base + "/chat/completions", body, key_env)
        return ("text", payload["choices"][0]["message"]["content"] or "")
    if kind == "completion":
        body = {"model": engine["model_id"], "prompt": prompt}
        body.update(sampling)
        payload = http_json(base + "/completions", body, key_env)
        return ("text", payload["choices"][0]["text"] or "")
    if kind == "image":
        payload = http_json(
            base + "/images/generations",
            {"model": engine["model_id"], "prompt": prompt, "n": 1},
            key_env,
        )
        entry = payload["data"][0]
        return ("image-ref", entry.get("url") or entry.get("b64_json") or "")
    raise ChainFailure("unknown engine kind %r" % kind)


# -- execution -------------------------------------------------------------------


def run(doc, inputs, mock_script):
    prompts = {p["name"]: p for p in doc.get("prompts", [])}
    engines = {e["name"]: e for e in doc.get("engines", [])}
    env = {v["name"]: (v["value"]["tag"], v["value"]["payload"]) for v in doc.get("variables", [])}
    queue = list(inputs)

    def enabled(unit):
        return unit.get("meta", {}).get("enabled", True)

    def exec_units(units):
        for unit in units:
            exec_unit(unit)

    def exec_unit(unit):
        if not enabled(unit):
            return
        kind = unit["kind"]
        if kind == "worker":
            exec_worker(unit, False)
        elif kind == "container":
            exec_units(unit.get("preunits", []))
            exec_units(unit.get("units", []))
        elif kind == "console_output":
            sys.stderr.write(as_text(eval_expr(env, unit["expr"])) + "\n")
        elif kind == "assign":
            env[unit["var"]] = eval_expr(env, unit["expr"])
        elif kind == "if":
            branch = unit.get("then", []) if truthy(eval_expr(env, unit["cond"])) else unit.get("else", [])
            exec_units(branch)
        elif kind == "while":
            iterations = 0
            while truthy(eval_expr(env, unit["cond"])):
                iterations += 1
                if iterations > WHILE_CAP:
                    raise ChainFailure("while loop exceeded %d iterations" % WHILE_CAP)
                exec_units(unit.get("body", []))
        elif kind == "for":
            lo = as_number(eval_expr(env, unit["from"]))
            hi = as_number(eval_expr(env, unit["to"]))
            if lo is None or hi is None or not float(lo).is_integer() or not float(hi).is_integer():
                raise ChainFailure("for-loop bounds must be integers")
            for index in range(int(lo), int(hi) + 1):
                env[unit["var"]] = ("number", index)
                exec_units(unit.get("body", []))
        elif kind == "output":
            worker = unit["worker"]
            if enabled(worker):
                exec_worker(worker, True)
        else:
            raise ChainFailure("unknown unit kind %r" % kind)

    def exec_worker(worker, in_output):
        values = []
        for pre in worker.get("preworkers", []):
            pre_kind = pre["kind"]
            if pre_kind == "worker":
                if not enabled(pre):
                    continue
                exec_worker(pre, False)
                if pre["name"] in env:
                    values.append((pre["name"], env[pre["name"]]))
            elif pre_kind == "console_input":
                if not queue:
                    raise ChainFailure("input needed for %r but none left" % pre.get("prompt", ""))
                values.append((pre.get("prompt", ""), ("text", queue.pop(0))))
            elif pre_kind == "variable_ref":
                if pre["name"] not in env:
                    raise ChainFailure("unbound variable %r used as worker input" % pre["name"])
                values.append((pre["name"], env[pre["name"]]))
            else:
                raise ChainFailure("unknown preworker kind %r" % pre_kind)
        template = prompts[worker["prompt"]]
        names = template_placeholders(template)
        bindings = dict(env)
        bindings.update({name: value for name, value in values})
        rendered = render_template(template, bindings)
        unmatched = [(n, v) for n, v in values if n not in names]
        if unmatched:
            rendered += "\n" + "\n".join("%s: %s" % (n, as_text(v)) for n, v in unmatched)
        value = invoke_engine(engines[worker["engine"]], rendered, mock_script)
        env[worker["name"]] = value
        if in_output:
            sys.stdout.write(as_text(value) + "\n")

    exec_units(doc.get("chain", []))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mock", help="mock engine script (JSON)")
    parser.add_argument("--input", action="append", default=[], help="scripted console input")
    args = parser.parse_args(argv)
    mock_script = None
    if args.mock:
        with open(args.mock, encoding="utf-8") as handle:
            mock_script = json.load(handle)
    doc = json.loads(PROJECT_JSON)
    try:
        run(doc, args.input, mock_script)
    except ChainFailure as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
