"""Synthetic court-style corpus: one annotated entity per document.

Each label owns a set of sentence templates with a single ``{}`` slot and a
pool of slot fillers. Documents wrap the annotated sentence in shared,
label-agnostic boilerplate (a section title, filler sentences with
``no.`` abbreviations) so the preprocessing path is exercised too.
"""

from __future__ import annotations

import numpy as np

from .corpus import AnnotatedDocument, Annotation, EntityLabel

TEMPLATES: dict[EntityLabel, tuple[str, ...]] = {
    EntityLabel.DATETIME: (
        "The hearing took place on {}.",
        "On {} the applicant lodged an appeal with the court.",
        "The decision was delivered on {} and served shortly afterwards.",
        "The applicant was released from custody on {}.",
        "The proceedings ended on {} when the judgment became final.",
        "The complaint was lodged on {} after a long delay.",
        "Between {} and the following spring nothing happened.",
        "The contested events occurred on the night of {}.",
    ),
    EntityLabel.ORG: (
        "The applicant appealed to the {}.",
        "The {} dismissed the appeal as unfounded.",
        "A request for review was sent to the {}.",
        "The case was referred to the {} for a fresh examination.",
        "The {} upheld the lower court's reasoning.",
        "The applicant was employed by the {} for several years.",
        "The {} refused to examine the complaint.",
        "Representatives of the {} attended the meeting.",
    ),
    EntityLabel.PERSON: (
        "{} was represented by a lawyer practising in the city.",
        "The applicant's lawyer, {}, filed the submissions.",
        "The witness {} gave evidence before the judge.",
        "{} stated that he had never met the applicant.",
        "The investigator, {}, questioned the suspects.",
        "According to {}, the documents had been lost.",
        "The applicant married {} shortly before the trial.",
        "Judge {} presided over the chamber.",
    ),
    EntityLabel.DEM: (
        "The applicant, a {}, was arrested at his home.",
        "As a {}, she was entitled to a special pension.",
        "The applicant is a {} who lives abroad.",
        "He worked as a {} until his dismissal.",
        "The victim, a {}, suffered serious injuries.",
        "A {} on duty witnessed the search.",
        "Her husband, a {}, was questioned as a witness.",
        "The applicant described himself as a {} by profession.",
    ),
    EntityLabel.LOC: (
        "The applicant was born in {}.",
        "He was detained in a prison near {}.",
        "The family moved to {} in search of work.",
        "The applicant lives in {} with his children.",
        "The search was carried out at a flat in {}.",
        "She travelled to {} to visit her relatives.",
        "The factory is located on the outskirts of {}.",
        "The applicant was transferred to a facility in {}.",
    ),
    EntityLabel.MISC: (
        "The disputed plot measured {} according to the survey.",
        "The applicant was charged under the {}.",
        "The newspaper article was titled {}.",
        "The applicant's vehicle, a {}, was confiscated.",
        "The land register listed a plot of {} in his name.",
        "The building permit covered an area of {}.",
        "The religious community known as {} was refused registration.",
        "The book entitled {} was seized by customs.",
    ),
    EntityLabel.QUANTITY: (
        "The applicant was ordered to pay {} in damages.",
        "The court awarded him {} for legal costs.",
        "The fine amounted to {} in total.",
        "He claimed {} in respect of pecuniary damage.",
        "The State was required to reimburse {} within three months.",
        "The applicant received a monthly allowance of {}.",
        "Bail was set at {} by the investigating judge.",
        "The contract was worth {} at the time.",
    ),
    EntityLabel.CODE: (
        "The applicant lodged application no_ {} with the Court.",
        "The case was registered under number {}.",
        "The judgment in case {} was cited by the parties.",
        "The complaint bears the reference {} in the registry.",
        "His passport, numbered {}, was withheld.",
        "The decision no_ {} was quashed on appeal.",
        "The file {} was transmitted to the prosecutor.",
        "Criminal case {} was opened against him.",
    ),
}

FILLERS: dict[EntityLabel, tuple[str, ...]] = {
    EntityLabel.DATETIME: (
        "15 December 1993", "3 March 2001", "19/10/2004", "21 June 1998", "the spring of 2002",
        "7 January 2010", "30 September 1995", "12 May 2007", "1 April 1999", "late 2003",
    ),
    EntityLabel.ORG: (
        "Court of Cassation", "Supreme Court", "Regional Court", "Ministry of Justice",
        "Constitutional Court", "Prosecutor General's Office", "Court of Appeal", "Bar Association",
        "District Court", "Police Department",
    ),
    EntityLabel.PERSON: (
        "Dr Price", "Mr Kowalski", "Paolo", "Ms Andersen", "Mr Petrov", "Mrs Smith",
        "Mr Yilmaz", "Ms Novak", "Dr Weber", "Mr Rossi",
    ),
    EntityLabel.DEM: (
        "police officer", "journalist", "teacher", "Turkish national", "farmer", "doctor",
        "pensioner", "retired soldier", "student", "civil servant",
    ),
    EntityLabel.LOC: (
        "London", "Amsterdam", "Istanbul", "Warsaw", "Kyiv", "Vienna", "Bucharest",
        "Helsinki", "Sofia", "Riga",
    ),
    EntityLabel.MISC: (
        "1,053 sq. m", "Criminal Code", "Freedom Today", "Volkswagen Golf", "Article 10 offence",
        "Jehovah's Witnesses", "blue Lada", "The Last Word", "Road Traffic Act", "2 hectares",
    ),
    EntityLabel.QUANTITY: (
        "2,000,000 Swedish kronor (SEK)", "EUR 5,000", "USD 12,300", "10,000 euros", "GBP 750",
        "PLN 40,000", "3,500 Turkish liras", "RUB 150,000", "CHF 2,200", "EUR 800",
    ),
    EntityLabel.CODE: (
        "36619/03", "12345/06", "5487/99", "2-114/2004", "AB 1234567", "77/2008",
        "4213/11", "CR-58/02", "901/2012", "3-1-1-42-05",
    ),
}

PREFIXES = ("", "", "", "Furthermore, ", "In addition, ", "It appears that ", "Subsequently, ")
BOILERPLATE = (
    "The case originated in an application against the State.",
    "The applicant complained of a violation of his rights.",
    "The Government contested that argument.",
    "The relevant domestic law is summarised below.",
    "The application no. 1/00 was joined to other proceedings.",
    "The parties submitted written observations.",
)


def _lower_first(s: str) -> str:
    # keep a capitalised slot value (names, places) as is
    return s if s.startswith("{}") else s[0].lower() + s[1:]


def generate_corpus(per_class: int, seed: int = 0) -> list[AnnotatedDocument]:
    """``per_class`` documents for each of the eight labels, deterministic in ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    docs = []
    for label in EntityLabel:
        templates = TEMPLATES[label]
        fillers = FILLERS[label]
        for i in range(per_class):
            template = templates[rng.integers(len(templates))]
            value = fillers[rng.integers(len(fillers))]
            prefix = PREFIXES[rng.integers(len(PREFIXES))]
            body = _lower_first(template) if prefix else template
            before, after = body.split("{}")
            head = "THE FACTS\n\n" + BOILERPLATE[rng.integers(len(BOILERPLATE))] + "\n"
            start = len(head) + len(prefix) + len(before)
            sentence = prefix + before + value + after
            tail = " " + BOILERPLATE[rng.integers(len(BOILERPLATE))]
            text = head + sentence + tail
            ident = "direct" if label in (EntityLabel.PERSON, EntityLabel.CODE) else "quasi"
            docs.append(AnnotatedDocument(
                id=f"{label.name.lower()}-{i:05d}",
                text=text,
                annotations=(Annotation(start, start + len(value), label, ident),),
                revised=bool(rng.integers(2)),
                target="applicant",
            ))
    return docs
