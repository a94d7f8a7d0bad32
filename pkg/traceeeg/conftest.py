# Test collection wiring for pytest: configure Django the way manage.py does.
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "traceeeg.settings.dev")
django.setup()
