#pragma once

// Regex fixture suite. Positive fixtures mark every expected span of the
// class with {{...}}; negative fixtures must yield no span of the class.

#include <string>
#include <utility>
#include <vector>

#include "phiscrub/labels/bilou.hpp"
#include "phiscrub/recognizers/recognizers.hpp"

namespace fixtures {

using phiscrub::labels::PhiClass;

struct ClassFixtures {
  PhiClass phi_class;
  std::vector<std::string> positive;
  std::vector<std::string> negative;
};

inline const std::vector<ClassFixtures>& regex_fixtures() {
  static const std::vector<ClassFixtures> f{
      {PhiClass::kPhone,
       {"Call {{555-123-4567}} today.", "Phone: {{(555) 123-4567}}", "call {{(555) 123-4567 x89}}",
        "reach her at {{555.123.4567}}.", "cell {{555 123 4567}}", "{{+1 555-123-4567}} is the daughter's number",
        "{{1-800-555-0199}} hotline", "home {{(617)555-0134}}", "work {{555-123-4567 ext. 1234}}",
        "Contact {{555-321-9876}}, {{555-111-2222}}", "tel:{{555-222-3333}}"},
       {"SSN 123-45-6789", "555-1234", "Dose 5551234567 mg", "ID 12-345-6789", "555-123-45678", "A555-123-4567",
        "2019-03-12", "Ref 555-123-4567-89", "fax: 555-123-4567", "192.168.100.200",
        "Temperature 98.6 and BP 120/80"}},
      {PhiClass::kFax,
       {"fax: {{555-123-4567}}", "Fax {{(555) 987-6543}}", "FAX number {{555.222.1111}}", "fax to {{555-444-3333}}",
        "Fax #: {{555 123 4567}}", "please fax {{1-555-123-4567}}", "(fax) {{555-123-4567}}", "Fax:{{555-123-4567}}",
        "fax results: {{555-999-0000}}", "Fax No. {{555-123-4567 x12}}"},
       {"Fax results to 555-987-6543.", "fax machine broken", "faxed 555-123-4567", "Telefax 555-123-4567",
        "phone 555-123-4567", "fax: 555-1234", "fax 12/03/2019", "Fax sent on 03/12/2019", "fax 555-123-45678",
        "Faxon 555-123-4567"}},
      {PhiClass::kEmail,
       {"Email {{john.doe@example.com}}.", "{{a@b.co}} wrote", "contact {{mary_s+notes@mail.hospital.org}}",
        "{{J.Smith@Clinic.COM}}", "send to <{{x99@host-name.net}}>", "{{first.last@sub.domain.co.uk}}",
        "reply {{n.o@ex.io}}, thanks", "{{user%tag@example.org}}", "mail:{{abc-def@foo.bar}}", "{{z@y.info}};"},
       {"john.doe@", "@example.com", "john@localhost", "a@b", "user@-bad.com", "john doe at example dot com",
        "x@y.c", "a@@b.com", "email: none", "test@example.com1"}},
      {PhiClass::kSsn,
       {"SSN {{123-45-6789}}", "{{987-65-4321}} on file", "social security number: {{123456789}}",
        "SSN: {{123 45 6789}}", "ssn#{{111223333}}", "ssn {{078-05-1120}}", "(SSN {{219-09-9999}})",
        "Social Security No. {{555443333}}", "SSN no. {{123-45-6789}},", "id {{321-54-9876}}."},
       {"123-456-789", "12-34-5678", "123-45-67890", "1123-45-6789", "123456789", "SSN pending", "SSN 12345678",
        "123 45 6789", "A123-45-6789", "123-45-6789-0"}},
      {PhiClass::kMrn,
       {"MRN {{48213377}}", "MRN: {{MR-0012345}}", "mrn#{{A1234567}}", "Medical record number {{99887766}}",
        "medical record no. {{555123}}", "chart {{C-445566}}", "MRN # {{12345-678}}", "MRN:{{0098765}}",
        "MRN {{4821}}.", "Chart No: {{XR90210}}"},
       {"MRN verified", "MRN", "MRN 12", "The chart was reviewed", "MRNs 1234567", "medical records from 2019",
        "MRN: ABCDEF", "xMRN 12345", "MRN 12.", "MRN -12345"}},
      {PhiClass::kHealthPlanId,
       {"policy {{XJH123456789}}", "Policy number: {{W1234-5678}}", "health plan id {{HP-99881}}",
        "insurance #{{77665544}}", "Member ID: {{M123456}}", "subscriber {{S00987}}", "Medicaid {{12345678A}}",
        "Medicare no. {{1EG4TE5MK73}}", "insurance number {{INS-4455}}", "policy:{{AB12345}}"},
       {"policy discussed", "insurance pending", "member of staff", "health plan changed", "policy 12",
        "policyholder 123456", "insurance: none", "Medicare eligible", "subscriber count 1234", "member 5 times"}},
      {PhiClass::kAccount,
       {"account {{123456789}}", "Account number: {{9988-7766}}", "acct {{A-12345}}", "Acct. {{55512}}",
        "acct#{{0012345}}", "account no. {{ACC98765}}", "Account ID {{X9Y8Z7}}", "billing account {{777888999}}",
        "account: {{12345-67}}", "ACCOUNT #{{334455}}"},
       {"account for symptoms", "accounts 12345", "on account of 3 days", "account 12", "acct pending",
        "accountant 123456", "take into account", "account: closed", "the account", "account -123"}},
      {PhiClass::kLicense,
       {"license {{D1234567}}", "Driver's license number {{S530-4567-8901}}", "licence no. {{AB123456}}",
        "DEA {{BS1234563}}", "certificate {{C-778899}}", "License #: {{LIC-12345}}", "license:{{9876543}}",
        "DEA#{{AB9876543}}", "medical license {{MD445566}}", "Certificate No {{2024-1234}}"},
       {"license expired", "licensed 12345", "license 12", "DEA registration", "certificate pending",
        "licenses 123456", "Unlicense 12345", "license: N/A", "sublicense 12345", "licensure 99999"}},
      {PhiClass::kVehicleSerial,
       {"VIN {{1HGCM82633A004352}}", "vin: {{JH4KA7561PC008269}}", "plate {{ABC-1234}}",
        "license plate {{7XYZ123}}", "vehicle id {{V12345}}", "VIN#{{2T1BR32E54C123456}}", "Plate No. {{ZZ-9876}}",
        "vehicle {{WVW12345}}", "VIN {{5YJSA1E26HF123456}}", "plate: {{8ABC123}}"},
       {"VIN unknown", "plate of food", "vehicle accident", "plates 1234", "VIN 12", "vinegar 12345",
        "platelet 150000", "vehicles 12345", "plateau 12345", "plate -"}},
      {PhiClass::kDeviceSerial,
       {"serial {{SN12345678}}", "Serial number: {{A1B2C3D4}}", "S/N {{998877}}", "device id {{PM-445566}}",
        "UDI {{00844588003288}}", "pacemaker serial no. {{PJN123456}}", "device: {{D-1234}}", "serial#{{X12345}}",
        "s/n:{{44556677}}", "device {{INS12345}}"},
       {"serial labs", "serial exams 3 times", "serials 123456", "device removed", "UDI pending", "devices 12345",
        "serial 12", "serially 12345", "S/N unknown", "medical device"}},
      {PhiClass::kUrl,
       {"see {{https://example.org/path?q=1}}", "{{http://x.io}}", "visit {{www.example.org}}.",
        "({{http://example.com/a_b}})", "{{ftp://files.example.com/data.txt}}", "{{HTTPS://EXAMPLE.COM}}",
        "portal {{www.mychart.org/login}},", "{{http://192.168.0.1:8080/x}}", "{{https://a.b/c#frag}}",
        "link:{{www.test-site.net}}"},
       {"www", "http://", "example.com", "wwwexample.com", "https:/bad.com", "see www.", "user@www.example.com",
        "awww.example.com", "http//example.com", "mailto:x@y.com"}},
      {PhiClass::kIp,
       {"from {{192.168.0.1}}", "{{10.0.0.255}} blocked", "host {{8.8.8.8}}.", "IP: {{172.16.254.1}}",
        "{{255.255.255.255}}", "{{0.0.0.0}}", "ip={{127.0.0.1}}", "({{100.64.1.2}})", "addr {{203.0.113.9}},",
        "{{1.2.3.4}} and {{5.6.7.8}}"},
       {"192.168.300.1", "256.1.1.1", "1.2.3", "192.168.01.1", "999.999.999.999", "1.2.3.4.5", "192.168.1.1a",
        "a192.168.1.1", "192-168-1-1", "v1.2.3.4"}},
  };
  return f;
}

struct Marked {
  std::string text;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // scalar offsets
};

// Strips {{ }} markers (fixtures are ASCII).
inline Marked unmark(const std::string& s) {
  Marked m;
  std::size_t open = 0;
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 2, "{{") == 0) {
      open = m.text.size();
      i += 2;
    } else if (s.compare(i, 2, "}}") == 0) {
      m.spans.push_back({open, m.text.size()});
      i += 2;
    } else {
      m.text += s[i++];
    }
  }
  return m;
}

struct FixtureOutcome {
  bool ok = true;
  std::string detail;
};

// Positive: the class's spans equal the marked spans exactly.
// Negative: no span of the class.
inline FixtureOutcome check_fixture(PhiClass cls, const std::string& fixture, bool positive,
                                    const std::vector<phiscrub::recognizers::RegexRule>& rules) {
  const Marked m = unmark(fixture);
  std::vector<std::pair<std::size_t, std::size_t>> got;
  for (const auto& r : phiscrub::recognizers::scan(m.text, rules)) {
    if (r.phi_class == cls) got.push_back({r.start, r.end});
  }
  const bool ok = positive ? got == m.spans : got.empty();
  FixtureOutcome out{ok, {}};
  if (!ok) {
    out.detail = std::string(phiscrub::labels::to_string(cls)) + (positive ? " positive" : " negative") + " '" +
                 m.text + "' got";
    for (const auto& [a, b] : got) out.detail += " [" + std::to_string(a) + "," + std::to_string(b) + ")";
  }
  return out;
}

}  // namespace fixtures
