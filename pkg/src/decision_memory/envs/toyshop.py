"""A miniature web-shop: search, browse result pages, pick options, buy.

Reward on purchase is the fraction of stated requirements the bought item
satisfies (each required attribute, each required option value, and the
price ceiling count once).
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InvalidAction, UnparseableGoal
from ..textutil import content_tokens
from .base import Environment, StepResult

PAGE_SIZE = 3
BUY_NOW = "Buy Now"
NEXT = "Next >"
PREV = "< Prev"
BACK = "Back to Search"

_PRICE_RE = re.compile(r",?\s*and price lower than (\d+(?:\.\d+)?) dollars\.?\s*$")
_PREFIXES = ("i am looking for", "i need", "find me", "i want", "can you find")


@dataclass(frozen=True)
class Product:
    code: str
    title: str
    category: str
    attributes: tuple[str, ...]
    options: tuple[tuple[str, tuple[str, ...]], ...]
    price: float

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "title": self.title,
            "category": self.category,
            "attributes": list(self.attributes),
            "options": {group: list(values) for group, values in self.options},
            "price": self.price,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Product":
        return cls(
            d["code"],
            d["title"],
            d["category"],
            tuple(d.get("attributes", ())),
            tuple((g, tuple(v)) for g, v in d.get("options", {}).items()),
            float(d["price"]),
        )

    @property
    def search_text(self) -> str:
        return " ".join([self.title, self.category, *self.attributes])


@dataclass(frozen=True)
class Requirement:
    category: str
    attributes: tuple[str, ...]
    options: tuple[tuple[str, str], ...]
    price_max: float

    @property
    def count(self) -> int:
        return len(self.attributes) + len(self.options) + 1


@dataclass
class ToyShopCatalog:
    products: list[Product]
    page_size: int = PAGE_SIZE

    def __post_init__(self) -> None:
        codes = [p.code.lower() for p in self.products]
        if len(set(codes)) != len(codes):
            raise ValueError("product codes must be unique")
        self._by_code = {p.code.lower(): p for p in self.products}

    def get(self, code: str) -> Product | None:
        return self._by_code.get(code.lower())

    @property
    def categories(self) -> list[str]:
        return sorted({p.category for p in self.products}, key=lambda c: (-len(c), c))

    @property
    def attribute_vocab(self) -> list[str]:
        return sorted({a for p in self.products for a in p.attributes}, key=lambda a: (-len(a), a))

    @property
    def option_groups(self) -> list[str]:
        return sorted({g for p in self.products for g, _ in p.options})

    def to_json(self) -> str:
        return json.dumps({"page_size": self.page_size, "products": [p.to_dict() for p in self.products]}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ToyShopCatalog":
        data = json.loads(text)
        return cls([Product.from_dict(p) for p in data["products"]], data.get("page_size", PAGE_SIZE))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ToyShopCatalog":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def search(self, query: str) -> list[str]:
        q = content_tokens(query)
        ranked = sorted(self.products, key=lambda p: (-len(q & content_tokens(p.search_text)), p.code))
        return [p.code for p in ranked]

    # --- instructions -------------------------------------------------------

    def parse_goal(self, goal: str) -> Requirement:
        text = " ".join(goal.lower().split())
        m = _PRICE_RE.search(text)
        if not m:
            raise UnparseableGoal(f"no price clause in {goal!r}")
        price_max = float(m.group(1))
        body = text[: m.start()]
        head, _, option_part = body.partition(" with ")
        options = []
        if option_part:
            for chunk in re.split(r",\s*(?:and\s+)?", option_part):
                group, sep, value = chunk.partition(":")
                if not sep or not value.strip():
                    raise UnparseableGoal(f"malformed option clause {chunk!r}")
                options.append((group.strip(), value.strip()))
        for prefix in _PREFIXES:
            if head.startswith(prefix):
                head = head[len(prefix):].strip()
                break
        category = next((c for c in self.categories if head.endswith(c.lower())), None)
        if category is None:
            raise UnparseableGoal(f"no known product category in {goal!r}")
        attr_text = head[: len(head) - len(category)]
        # attributes are comma-separated phrases in front of the category
        attributes = tuple(sorted({a.strip() for a in attr_text.split(",") if a.strip()}))
        return Requirement(category, attributes, tuple(options), price_max)

    def score(self, product: Product, selected: dict[str, str], req: Requirement) -> float:
        hits = sum(1 for a in req.attributes if a in product.attributes)
        hits += sum(1 for g, v in req.options if selected.get(g, "").lower() == v.lower())
        hits += 1 if product.price <= req.price_max + 1e-9 else 0
        return hits / req.count


def render_instruction(prefix: str, attributes: list[str], category: str, options: list[tuple[str, str]], price_max: float) -> str:
    head = f"{prefix} {', '.join(attributes)} {category}" if attributes else f"{prefix} {category}"
    parts = [head]
    if options:
        parts[0] += " with " + ", and ".join(f"{g}: {v}" for g, v in options)
    return f"{parts[0]}, and price lower than {price_max:.2f} dollars"


def search_query(goal: str) -> str:
    """Keyword query built from an instruction: drop price clause and option labels."""
    text = " ".join(goal.lower().split())
    text = _PRICE_RE.sub("", text)
    for prefix in _PREFIXES:
        if text.startswith(prefix):
            text = text[len(prefix):].strip()
            break
    text = re.sub(r"\b[a-z]+:\s*", "", text)
    text = text.replace(" with ", " ").replace(", and ", " ").replace(",", " ")
    return " ".join(text.split())


@dataclass
class _ShopState:
    goal: str
    seed: int
    requirement: Requirement
    observation: str = ""
    step_count: int = 0
    done: bool = False
    reward: float | None = None
    page: str = "search"  # search | results | item
    query: str = ""
    results: list[str] = field(default_factory=list)
    result_page: int = 1
    item: str = ""
    selected: dict[str, str] = field(default_factory=dict)
    clicked: list[str] = field(default_factory=list)


class ToyShop(Environment):
    family = "toyshop"

    def __init__(self, catalog: ToyShopCatalog) -> None:
        super().__init__()
        self.catalog = catalog

    # --- rendering --------------------------------------------------------

    def _render(self, s: _ShopState) -> str:
        if s.page == "search":
            return f"Instruction: {s.goal}\n[Search]"
        if s.page == "results":
            size = self.catalog.page_size
            pages = max(1, math.ceil(len(s.results) / size))
            lines = [f"[{BACK}]", f"Page {s.result_page} (Total results: {len(s.results)})"]
            if s.result_page > 1:
                lines.append(f"[{PREV}]")
            if s.result_page < pages:
                lines.append(f"[{NEXT}]")
            for code in self._page_codes(s):
                p = self.catalog.get(code)
                lines.extend([f"[{p.code}]", p.title, f"{p.price:.2f}"])
            return "\n".join(lines)
        p = self.catalog.get(s.item)
        lines = [f"[{BACK}]", f"[{PREV}]"]
        for group, values in p.options:
            lines.append(group + " " + " ".join(f"[{v}]" for v in values))
        lines.extend([p.title, f"Price: {p.price:.2f}", "Rating: N.A.", f"[{BUY_NOW}]"])
        lines.extend(f"You have clicked {v}." for v in s.clicked)
        return "\n".join(lines)

    def _page_codes(self, s: _ShopState) -> list[str]:
        size = self.catalog.page_size
        start = (s.result_page - 1) * size
        return s.results[start:start + size]

    # --- contract ---------------------------------------------------------

    def _initial_state(self, goal: str, seed: int) -> _ShopState:
        req = self.catalog.parse_goal(goal)
        s = _ShopState(goal=" ".join(goal.split()), seed=seed, requirement=req)
        s.observation = self._render(s)
        return s

    def exhaustion_reward(self) -> float | None:
        return None

    def _clickables(self, s: _ShopState) -> dict[str, str]:
        """Lower-cased label -> canonical label for the current page."""
        labels: list[str] = []
        if s.page == "results":
            pages = max(1, math.ceil(len(s.results) / self.catalog.page_size))
            labels.append(BACK)
            if s.result_page > 1:
                labels.append(PREV)
            if s.result_page < pages:
                labels.append(NEXT)
            labels.extend(self._page_codes(s))
        elif s.page == "item":
            labels.extend([BACK, PREV])
            for _, values in self.catalog.get(s.item).options:
                labels.extend(values)
            labels.append(BUY_NOW)
        return {label.lower(): label for label in labels}

    def admissible_actions(self) -> list[str]:
        s = self._state
        if s.done:
            return []
        if s.page == "search":
            return [f"search[{search_query(s.goal)}]"]
        return [f"click[{label}]" for label in self._clickables(s).values()]

    def _apply(self, s: _ShopState, action: str) -> StepResult:
        m = re.fullmatch(r"(search|click)\s*\[(.*)\]", action, flags=re.IGNORECASE | re.DOTALL)
        if not m:
            raise InvalidAction(action, "Invalid action: use search[query] or click[button].")
        verb, arg = m.group(1).lower(), " ".join(m.group(2).split())
        if verb == "search":
            if s.page != "search":
                raise InvalidAction(action, "There is no search box on this page; click[Back to Search] first.")
            if not arg:
                raise InvalidAction(action, "The search query is empty.")
            s.query, s.results, s.result_page, s.page = arg, self.catalog.search(arg), 1, "results"
            return StepResult(self._render(s), False, None)
        if s.page == "search":
            raise InvalidAction(action, "Nothing to click on the search page; use search[query].")
        label = self._clickables(s).get(arg.lower())
        if label is None:
            raise InvalidAction(action, f"There is no [{arg}] button on this page.")
        if label == BACK:
            s.page, s.item, s.selected, s.clicked = "search", "", {}, []
        elif s.page == "results":
            if label == NEXT:
                s.result_page += 1
            elif label == PREV:
                s.result_page -= 1
            else:
                s.page, s.item, s.selected, s.clicked = "item", label, {}, []
        elif label == PREV:
            s.page, s.item, s.selected, s.clicked = "results", "", {}, []
        elif label == BUY_NOW:
            product = self.catalog.get(s.item)
            reward = self.catalog.score(product, s.selected, s.requirement)
            return StepResult(f"Thank you for shopping with us! Reward [{reward:g}]", True, reward)
        else:
            product = self.catalog.get(s.item)
            group = next(g for g, values in product.options if label in values)
            s.selected[group] = label
            s.clicked.append(label)
        return StepResult(self._render(s), False, None)


# --- catalog and goal generation -------------------------------------------

_BRANDS = ["Yinimo", "Carol Wright", "Hauklie", "Asics", "Foggs", "Zspzx", "Northpeak", "Bravo", "Lumen", "Kestrel"]
_COLORS = ["black", "blue", "red", "khaki", "gray", "white", "navy", "green", "brown", "charcoal", "beige", "olive"]
_APPAREL_SIZES = ["small", "medium", "large", "x-large", "xx-large", "3x-large", "4x-large", "5x-large"]
_SHOE_SIZES = ["7 women | 5 men", "8 women | 6 men", "9 women | 7 men", "10 women | 8 men", "10.5 women | 9 men", "11 women | 9 men", "11.5 women | 9.5 men"]

CATEGORIES: dict[str, dict] = {
    "shoes": {"attributes": ["steel toe", "rubber sole", "slip resistant", "memory foam", "lace up", "waterproof"], "sizes": _SHOE_SIZES},
    "shorts": {"attributes": ["moisture wicking", "loose fit", "elastic waistband", "quick dry", "polyester cotton"], "sizes": _APPAREL_SIZES},
    "lounge pants": {"attributes": ["drawstring closure", "fleece lined", "relaxed fit", "machine wash"], "sizes": _APPAREL_SIZES},
    "fleece jacket": {"attributes": ["warm", "water resistant", "zip pocket", "lightweight"], "sizes": _APPAREL_SIZES},
    "shirt": {"attributes": ["short sleeve", "loose fit", "cotton", "button down", "slim fit"], "sizes": _APPAREL_SIZES},
    "flats": {"attributes": ["ankle strap", "open toe", "rubber sole", "wide width"], "sizes": _SHOE_SIZES},
    "speaker": {"attributes": ["bluetooth", "high power", "3d surround", "portable", "waterproof"], "sizes": []},
    "subwoofer": {"attributes": ["high power", "bluetooth", "3d surround", "wireless"], "sizes": []},
}


def _product_code(rng: random.Random, used: set[str]) -> str:
    alphabet = "ABCDEFGHJKLMNPQRSTUVWXYZ0123456789"
    while True:
        code = "B0" + "".join(rng.choice(alphabet) for _ in range(8))
        if code not in used:
            used.add(code)
            return code


def generate_catalog(rng: random.Random, size: int | None = None, categories: list[str] | None = None,
                     max_option_groups: int = 2, max_values: int = 4) -> ToyShopCatalog:
    size = size if size is not None else rng.randint(20, 50)
    cats = categories or sorted(CATEGORIES)
    used: set[str] = set()
    products = []
    for _ in range(size):
        category = rng.choice(cats)
        spec = CATEGORIES[category]
        attributes = sorted(rng.sample(spec["attributes"], rng.randint(1, min(3, len(spec["attributes"])))))
        groups = []
        if max_option_groups >= 1:
            groups.append(("color", tuple(rng.sample(_COLORS, rng.randint(1, max_values)))))
        if spec["sizes"] and max_option_groups >= 2:
            groups.append(("size", tuple(rng.sample(spec["sizes"], rng.randint(1, min(max_values, len(spec["sizes"])))))))
        brand = rng.choice(_BRANDS)
        title = f"{brand} {' '.join(a.title() for a in attributes)} {category.title()}"
        price = round(rng.uniform(8, 120), 2)
        products.append(Product(_product_code(rng, used), title, category, tuple(attributes), tuple(groups), price))
    return ToyShopCatalog(products)


def sample_goal(catalog: ToyShopCatalog, rng: random.Random) -> tuple[str, Product]:
    """Instruction fully satisfied by one target product (which is returned)."""
    target = rng.choice(catalog.products)
    attributes = sorted(rng.sample(list(target.attributes), rng.randint(1, len(target.attributes))))
    options = [(group, rng.choice(values)) for group, values in target.options]
    ceiling = math.ceil(target.price * rng.uniform(1.05, 1.6) / 10) * 10
    prefix = rng.choice(["i need", "find me", "i am looking for"])
    return render_instruction(prefix, attributes, target.category, options, float(ceiling)), target
