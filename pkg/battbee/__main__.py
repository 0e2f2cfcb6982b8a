from battbee.main import main

main()
