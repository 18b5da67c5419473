/** Ghost-layer overlays: one hoverable indicator per anomaly marker on a
 * card's series; clicking an indicator produces a drill-down utterance
 * scoped to the marker's bucket. */

export interface AnomalyMarker {
  target: number; // index into the card's plotted series
  score: number;
  kind: "spike" | "dip" | "missingness";
}

export interface GhostIndicator {
  cardId: string;
  seriesIndex: number;
  kind: AnomalyMarker["kind"];
  hoverText: string;
}

export function buildIndicators(cardId: string, markers: AnomalyMarker[]): GhostIndicator[] {
  return markers.map((m) => ({
    cardId,
    seriesIndex: m.target,
    kind: m.kind,
    hoverText: `${m.kind} (z=${m.score.toFixed(2)})`,
  }));
}

export interface DrillDownRequest {
  utterance: string;
  sourceCardId: string;
}

/** The drill-down goes through the gateway like any other utterance; the
 * resulting card is linked back to the source by the caller via LinkCards. */
export function indicatorClick(
  indicator: GhostIndicator,
  bucketColumn: string,
  bucketValue: string,
): DrillDownRequest {
  return {
    utterance: `filter ${bucketColumn} = ${bucketValue}`,
    sourceCardId: indicator.cardId,
  };
}
