/** Canned API payloads mirroring the service's wire shapes. */

import type { ApiAuditOutcome, ApiRecommendResponse } from '../src/types.js';

export const SUBJECTS = 'http://id.loc.gov/authorities/subjects/';

export function outcome(partial: Partial<ApiAuditOutcome> & { term: string }): ApiAuditOutcome {
  return {
    round: 0,
    status: 'NotFound',
    authorized_label: null,
    uri: null,
    alternatives: [],
    error: null,
    ...partial,
  };
}

export function recommendation(): ApiRecommendResponse {
  return {
    controlled: [
      {
        heading: 'World Wide Web',
        uri: `${SUBJECTS}sh92002816`,
        link: `${SUBJECTS}sh92002816`,
        justification: 'Exact authorized heading for candidate "World Wide Web".',
      },
      {
        heading: 'Cooking',
        uri: `${SUBJECTS}sh85031730`,
        link: `${SUBJECTS}sh85031730`,
        justification: 'Authorized form substituted for variant candidate "Cookery".',
      },
    ],
    uncontrolled: ['hypertext'],
    rounds_used: 1,
    audit: [
      [
        outcome({
          term: 'World Wide Web',
          status: 'ExactAuthorized',
          authorized_label: 'World Wide Web',
          uri: `${SUBJECTS}sh92002816`,
          alternatives: [
            { label: 'World Wide Web', uri: `${SUBJECTS}sh92002816`, score: '1.000000' },
          ],
        }),
        outcome({
          term: 'Cookery',
          status: 'VariantMatch',
          authorized_label: 'Cooking',
          uri: `${SUBJECTS}sh85031730`,
          alternatives: [{ label: 'Cooking', uri: `${SUBJECTS}sh85031730`, score: '0.285714' }],
        }),
        outcome({
          term: 'hypertext',
          status: 'NotFound',
          alternatives: [
            { label: 'Hypertext systems', uri: `${SUBJECTS}sh88007934`, score: '0.514706' },
          ],
        }),
      ],
    ],
  };
}
