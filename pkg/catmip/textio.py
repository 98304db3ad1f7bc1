import math

LP_NAME_CHARS = 'ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_'


def sanitize_lp_name(name: str) -> str:
    "Replace every character outside [A-Za-z0-9_] with an underscore."
    sanitized = ""
    for c in name:
        sanitized += c if c in LP_NAME_CHARS else "_"
    if not sanitized or sanitized[0].isdigit():
        sanitized = "v_" + sanitized
    return sanitized


def format_number(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == math.floor(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def parse_int_list(text: str) -> list[int]:
    "'4,6,8' -> [4, 6, 8]."
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"not a comma-separated list of integers: {text!r}") from None


def is_token(name: str) -> bool:
    "Label and capability names: non-empty, no whitespace, no quotes."
    return bool(name) and not any(c.isspace() or c == '"' for c in name)
