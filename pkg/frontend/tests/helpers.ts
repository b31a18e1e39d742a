import type { CasePayloadMsg } from '../src/api';

export const DIMS = [
  'text_image_consistency',
  'source_target_fidelity',
  'overall_quality',
];

export function caseSample(
  overrides: Partial<CasePayloadMsg> = {},
): CasePayloadMsg {
  return {
    kind: 'case',
    served_at_ms: 0,
    min_dwell_ms: 5000,
    progress: { done: 0, total: 10 },
    case: {
      case_id: 'c000',
      source_url: '/img/c000_src.png',
      edited_url: '/img/c000_edt.png',
      prompt: 'replace the sky with a sunset',
      dims: DIMS,
      score_min: 1,
      score_max: 10,
    },
    ...overrides,
  };
}
