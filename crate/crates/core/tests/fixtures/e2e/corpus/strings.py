import re


def title_case(text):
    """Capitalize the first letter of every word."""
    return " ".join(w[:1].upper() + w[1:] for w in text.split(" "))


def strip_vowels(word):
    """Remove every vowel from word."""
    return re.sub(r"[aeiouAEIOU]", "", word)


def caesar_shift(text, k):
    """Shift lowercase letters of text forward by k positions."""
    shifted = []
    for ch in text:
        if "a" <= ch <= "z":
            shifted.append(chr((ord(ch) - 97 + k) % 26 + 97))
        else:
            shifted.append(ch)
    return "".join(shifted)


def longest_word(sentence):
    """The longest whitespace-separated word; the earliest wins ties."""
    best = ""
    for word in sentence.split():
        if len(word) > len(best):
            best = word
    return best


def run_length_encode(s):
    """Encode s as a list of (character, count) pairs."""
    pairs = []
    for ch in s:
        if pairs and pairs[-1][0] == ch:
            pairs[-1] = (ch, pairs[-1][1] + 1)
        else:
            pairs.append((ch, 1))
    return pairs


def is_anagram(a, b):
    """True when a and b contain the same letters, ignoring case and spaces."""
    clean = lambda s: sorted(s.replace(" ", "").lower())
    return clean(a) == clean(b)


def extract_numbers(text):
    """All integers appearing in text, in order."""
    return [int(m) for m in re.findall(r"-?\d+", text)]


def snake_to_camel(name):
    """Convert snake_case to camelCase."""
    head, *rest = name.split("_")
    return head + "".join(part.capitalize() for part in rest)


def count_substring(haystack, needle):
    """Count possibly overlapping occurrences of needle in haystack."""
    count = start = 0
    while True:
        idx = haystack.find(needle, start)
        if idx < 0:
            return count
        count += 1
        start = idx + 1


def wrap_text(text, width):
    """Greedy word wrap of text into lines of at most width characters."""
    lines, current = [], ""
    for word in text.split():
        candidate = word if not current else current + " " + word
        if len(candidate) <= width:
            current = candidate
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    return lines
